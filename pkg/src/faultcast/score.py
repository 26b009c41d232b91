"""Uniform-severity Monte Carlo robustness evaluation and derived scores.

The estimator draws one shared set of test windows, computes the clean loss
once per window, then traverses the scenarios in fixed benchmark order with
fresh severity and auxiliary randomness per (scenario, window) pair.  All
randomness comes from substreams keyed by the evaluation seed, the
scenario's fixed ordinal, and the window index, so a report is bit-identical
for any worker count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import WindowSource
from .faults import (
    BENCHMARK_ORDER,
    BENCHMARK_SPECS,
    ChannelRule,
    Scenario,
    apply_scenario,
    benchmark_ordinal,
    draw_perturbation,
)
from .rng import Stream, derive
from .stats import logspace_fit

SCHEMA_VERSION = 1


class ScoreError(ValueError):
    """Raised for scoring contract violations (shape or config mismatches)."""


class DegradationUndefinedError(ScoreError):
    """Clean MSE is zero, so degradation ratios are undefined."""


def mse_target(yhat: np.ndarray, y: np.ndarray) -> float:
    """Mean squared error over the target matrix (horizon x m_tgt)."""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ScoreError(f"prediction shape {yhat.shape} != target shape {y.shape}")
    diff = yhat - y
    return float(np.mean(diff * diff))


def degradation(mse_p: float, mse_c: float) -> float:
    """Perturbed-to-clean MSE ratio."""
    if mse_c <= 0.0:
        raise DegradationUndefinedError(f"clean MSE {mse_c} is not positive")
    return mse_p / mse_c


def normalize_scenarios(scenarios) -> tuple[Scenario, ...]:
    """Order a scenario subset by the fixed benchmark order."""
    chosen = set(scenarios) if scenarios is not None else set(BENCHMARK_ORDER)
    for s in chosen:
        if s not in BENCHMARK_SPECS:
            raise ScoreError(f"{s} is not a scored benchmark scenario")
    if not chosen:
        raise ScoreError("scenario set is empty")
    return tuple(s for s in BENCHMARK_ORDER if s in chosen)


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation protocol constants: budget, seed, scenarios, channel rule."""

    k: int = 10_000
    eval_seed: int = 0
    scenarios: tuple[Scenario, ...] = BENCHMARK_ORDER
    channel_rule: ChannelRule = field(default_factory=ChannelRule)
    bootstrap: int = 1000

    def __post_init__(self):
        if self.k < 1:
            raise ScoreError("window budget k must be >= 1")
        object.__setattr__(self, "scenarios", normalize_scenarios(self.scenarios))

    def echo(self) -> dict:
        return {
            "k": self.k,
            "eval_seed": self.eval_seed,
            "scenarios": [s.value for s in self.scenarios],
            "channel_rule": self.channel_rule.spelling(),
            "bootstrap": self.bootstrap,
        }


@dataclass
class RobustnessReport:
    """Per-window losses plus every derived score for one model."""

    model_id: str
    config: dict
    scenarios: tuple[Scenario, ...]
    clean_losses: np.ndarray            # (K,)
    perturbed_losses: np.ndarray        # (|P|, K)
    mse_c: float
    mse_p: np.ndarray                   # (|P|,)
    degradation_defined: bool
    d_p: np.ndarray | None              # (|P|,) or None when undefined
    p_star: Scenario
    d_w: float | None
    mse_w: float
    d_bar: float | None
    mpc: float
    rpc: float | None
    comparators: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)

    def scenario_index(self, scenario: Scenario) -> int:
        return self.scenarios.index(scenario)


def _window_task(model, source, cfg, scenarios, start, k):
    sample = source.window(start)
    x, y = sample.x, sample.y
    try:
        clean_loss = mse_target(model.predict(x), y)
    except Exception as exc:
        raise ScoreError(f"forecaster failed at window {k} (clean pass): {exc}") from exc
    losses = np.empty(len(scenarios), dtype=np.float64)
    schema = source.ds.schema
    for j, scenario in enumerate(scenarios):
        stream = Stream(derive(cfg.eval_seed, "scenario", benchmark_ordinal(scenario), k))
        severity = stream.uniform()
        draw = draw_perturbation(
            BENCHMARK_SPECS[scenario], cfg.channel_rule, severity,
            source.n, schema, stream,
        )
        x_pert = apply_scenario(x, draw)
        try:
            losses[j] = mse_target(model.predict(x_pert), y)
        except Exception as exc:
            raise ScoreError(
                f"forecaster failed at window {k}, scenario {scenario.value}: {exc}"
            ) from exc
    return clean_loss, losses


def evaluate(
    model,
    source: WindowSource,
    cfg: EvalConfig,
    workers: int = 1,
    model_id: str | None = None,
    dataset_id: str = "",
) -> RobustnessReport:
    """Run the uniform-severity Monte Carlo protocol for one model.

    Windows are drawn once, uniformly with replacement, from the source's
    start-index set; the same sampled windows serve the clean pass and every
    scenario.  A zero clean MSE leaves raw MSEs reported and degradation
    fields unset rather than dividing by zero.
    """
    scenarios = cfg.scenarios
    picks = Stream(derive(cfg.eval_seed, "windows")).randint_block(
        len(source.start_indices), cfg.k
    )
    starts = source.start_indices[picks]

    clean = np.empty(cfg.k, dtype=np.float64)
    perturbed = np.empty((len(scenarios), cfg.k), dtype=np.float64)

    def run(k: int):
        return _window_task(model, source, cfg, scenarios, starts[k], k)

    if workers <= 1:
        results = map(run, range(cfg.k))
        for k, (c, losses) in enumerate(results):
            clean[k] = c
            perturbed[:, k] = losses
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for k, (c, losses) in enumerate(pool.map(run, range(cfg.k))):
                clean[k] = c
                perturbed[:, k] = losses

    return build_report(
        model_id=model_id or getattr(model, "identifier", type(model).__name__),
        config={"dataset_id": dataset_id, "n": source.n, "horizon": source.horizon,
                **cfg.echo()},
        scenarios=scenarios,
        clean_losses=clean,
        perturbed_losses=perturbed,
    )


def build_report(
    model_id: str,
    config: dict,
    scenarios: tuple[Scenario, ...],
    clean_losses: np.ndarray,
    perturbed_losses: np.ndarray,
) -> RobustnessReport:
    """Aggregate per-window losses into the full report.

    The report identities hold to a few ulps by construction: d_p and d_w
    share one division by mse_c, d_bar is the mean of d_p, rpc is 1 / d_bar.
    """
    mse_c = float(clean_losses.mean())
    mse_p = perturbed_losses.mean(axis=1)
    # argmax of d_p equals argmax of mse_p (shared denominator); np.argmax
    # returns the first maximum, which is the earliest in benchmark order.
    star = int(np.argmax(mse_p))
    mse_w = float(mse_p[star])
    mpc = float(mse_p.mean())
    defined = mse_c > 0.0
    if defined:
        d_p = mse_p / mse_c
        d_w = float(d_p[star])
        d_bar = float(d_p.mean())
        rpc = 1.0 / d_bar
    else:
        d_p, d_w, d_bar, rpc = None, None, None, None
    return RobustnessReport(
        model_id=model_id,
        config=config,
        scenarios=scenarios,
        clean_losses=clean_losses,
        perturbed_losses=perturbed_losses,
        mse_c=mse_c,
        mse_p=mse_p,
        degradation_defined=defined,
        d_p=d_p,
        p_star=scenarios[star],
        d_w=d_w,
        mse_w=mse_w,
        d_bar=d_bar,
        mpc=mpc,
        rpc=rpc,
    )


def worst_scenario(report: RobustnessReport) -> tuple[Scenario, float, float]:
    """Worst scenario id with its degradation and fault-time MSE."""
    if not report.degradation_defined:
        raise DegradationUndefinedError("clean MSE is zero")
    return report.p_star, report.d_w, report.mse_w


def mean_case(report: RobustnessReport) -> tuple[float, float, float]:
    """Mean degradation, mean corrupted MSE, and its inverse display scale."""
    if not report.degradation_defined:
        raise DegradationUndefinedError("clean MSE is zero")
    return report.d_bar, report.mpc, report.rpc


def reference_normalized(
    report: RobustnessReport, reference: RobustnessReport
) -> dict:
    """Reference-normalized comparators against a fixed reference model.

    mCE is the mean over scenarios of MSE_p(f) / MSE_p(ref); relative mCE
    subtracts each model's clean MSE first.  Scenarios with non-positive
    reference denominators are flagged and the affected aggregate is None.
    """
    if report.scenarios != reference.scenarios:
        raise ScoreError("scenario sets differ between report and reference")
    flagged_mce = [
        s.value for s, denom in zip(report.scenarios, reference.mse_p) if denom <= 0.0
    ]
    rel_denom = reference.mse_p - reference.mse_c
    flagged_rel = [
        s.value for s, denom in zip(report.scenarios, rel_denom) if denom <= 0.0
    ]
    mce = None
    if not flagged_mce:
        mce = float(np.mean(report.mse_p / reference.mse_p))
    relative = None
    if not flagged_rel:
        relative = float(np.mean((report.mse_p - report.mse_c) / rel_denom))
    return {
        "mce": mce,
        "relative_mce": relative,
        "flagged": sorted(set(flagged_mce) | set(flagged_rel)),
        "reference_id": reference.model_id,
    }


def effective_robustness(pool: list[RobustnessReport]) -> dict:
    """Residuals below a log-space frontier fitted on the model pool.

    Fits log(mpc) = a + b * log(mse_c) over the pool, then reports
    rho(f) = exp(a + b * log mse_c(f)) - mpc(f); higher is better.
    """
    if len(pool) < 2:
        raise ScoreError("effective robustness needs a pool of >= 2 models")
    x = np.array([r.mse_c for r in pool])
    y = np.array([r.mpc for r in pool])
    a, b = logspace_fit(x, y)
    rho = {r.model_id: float(np.exp(a + b * np.log(r.mse_c)) - r.mpc) for r in pool}
    return {"a": a, "b": b, "rho": rho}


@dataclass(frozen=True)
class PairDelta:
    """Variant-minus-baseline reporting deltas for one matched pair.

    Negative deltas favor the variant; tau is the baseline-minus-variant
    mean corrupted MSE (positive favors the variant) and satisfies
    tau == -delta_mpc exactly.
    """

    baseline_id: str
    variant_id: str
    delta_d_w: float
    delta_mse_c: float
    delta_mse_w: float
    delta_d_bar: float
    delta_mpc: float
    tau: float

    NUMERIC_FIELDS = (
        "delta_d_w", "delta_mse_c", "delta_mse_w", "delta_d_bar", "delta_mpc", "tau",
    )


_PAIR_MATCH_KEYS = ("dataset_id", "n", "horizon", "k", "eval_seed", "scenarios",
                    "channel_rule")


def paired_deltas(variant: RobustnessReport, baseline: RobustnessReport) -> PairDelta:
    """Direct differences for one dataset-matched method-baseline pair.

    MSE_w compares each model at its own worst scenario.
    """
    for key in _PAIR_MATCH_KEYS:
        if variant.config.get(key) != baseline.config.get(key):
            raise ScoreError(
                f"config mismatch on {key!r}: "
                f"{variant.config.get(key)!r} != {baseline.config.get(key)!r}"
            )
    if not (variant.degradation_defined and baseline.degradation_defined):
        raise DegradationUndefinedError("paired deltas need defined degradations")
    return PairDelta(
        baseline_id=baseline.model_id,
        variant_id=variant.model_id,
        delta_d_w=variant.d_w - baseline.d_w,
        delta_mse_c=variant.mse_c - baseline.mse_c,
        delta_mse_w=variant.mse_w - baseline.mse_w,
        delta_d_bar=variant.d_bar - baseline.d_bar,
        delta_mpc=variant.mpc - baseline.mpc,
        tau=baseline.mpc - variant.mpc,
    )


def report_to_dict(report: RobustnessReport, include_losses: bool = True) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model_id": report.model_id,
        "config": report.config,
        "clean": {"mse_c": report.mse_c},
        "scenarios": [
            {
                "id": s.value,
                "mse_p": float(report.mse_p[j]),
                "d_p": float(report.d_p[j]) if report.degradation_defined else None,
            }
            for j, s in enumerate(report.scenarios)
        ],
        "summary": {
            "degradation_defined": report.degradation_defined,
            "p_star": report.p_star.value,
            "d_w": report.d_w,
            "mse_c": report.mse_c,
            "mse_w": report.mse_w,
            "d_bar": report.d_bar,
            "mpc": report.mpc,
            "rpc": report.rpc,
        },
        "comparators": report.comparators,
        "intervals": {
            name: {"point": iv.point, "lo": iv.lo, "hi": iv.hi,
                   "level": iv.level, "replicates": iv.replicates}
            for name, iv in report.intervals.items()
        },
    }
    if include_losses:
        doc["clean"]["per_window"] = report.clean_losses.tolist()
        for j, entry in enumerate(doc["scenarios"]):
            entry["per_window"] = report.perturbed_losses[j].tolist()
    return doc


def report_json_bytes(report: RobustnessReport, include_losses: bool = True) -> bytes:
    """Canonical JSON serialization: sorted keys, fixed separators.

    Contains no timestamps, so identical runs produce identical bytes.
    """
    doc = report_to_dict(report, include_losses=include_losses)
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _interval_columns(intervals: dict, stat: str) -> dict:
    iv = intervals.get(stat)
    if iv is None:
        return {}
    return {f"{stat}_lo": iv.lo, f"{stat}_hi": iv.hi}


def write_report_files(
    report: RobustnessReport, out_dir: str | Path, include_losses: bool = True
) -> None:
    """Write report.json plus per_scenario.csv and summary.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(report_json_bytes(report, include_losses))

    with (out / "per_scenario.csv").open("w", newline="") as fh:
        stats = [f"d_p/{s.value}" for s in report.scenarios]
        extra_cols = sorted(
            {col for s in stats for col in _interval_columns(report.intervals, s)}
        )
        writer = csv.writer(fh)
        writer.writerow(["scenario", "mse_p", "d_p"] + extra_cols)
        for j, s in enumerate(report.scenarios):
            row = [
                s.value,
                repr(float(report.mse_p[j])),
                repr(float(report.d_p[j])) if report.degradation_defined else "",
            ]
            cols = _interval_columns(report.intervals, f"d_p/{s.value}")
            row += [repr(cols.get(c)) if c in cols else "" for c in extra_cols]
            writer.writerow(row)

    with (out / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        base = {
            "mse_c": report.mse_c,
            "d_w": report.d_w,
            "mse_w": report.mse_w,
            "d_bar": report.d_bar,
            "mpc": report.mpc,
            "rpc": report.rpc,
        }
        cols = list(base)
        interval_cols = []
        for stat in cols:
            interval_cols += list(_interval_columns(report.intervals, stat))
        writer.writerow(cols + interval_cols + ["p_star", "model_id"])
        values = [("" if base[c] is None else repr(float(base[c]))) for c in cols]
        for stat in cols:
            for name, value in _interval_columns(report.intervals, stat).items():
                values.append(repr(float(value)))
        writer.writerow(values + [report.p_star.value, report.model_id])
