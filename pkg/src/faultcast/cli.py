"""Config-driven command line: validate / evaluate / compare / sensitivity.

Exit codes: 0 success, 2 config or data error, 3 model or protocol error,
4 degradation undefined (clean MSE zero; raw MSEs still written).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .adapter import AdapterError, ExternalForecaster
from .config import (
    ConfigError,
    dump_config,
    load_config,
    peek_csv_header,
    resolve_channel_indices,
    seed_for,
)
from .dataset import (
    ChannelSchema,
    DatasetError,
    WindowSource,
    apply_standardizer,
    chronological_split,
    enumerate_windows,
    fit_standardizer,
    load_csv,
)
from .faults import SCENARIO_CLASS, ChannelRule, parse_scenario
from .forecast import (
    EnsembleForecaster,
    FitError,
    ProtocolViolationError,
    SeasonalNaiveForecaster,
    SmoothedForecaster,
    fit_fault_augmented,
    fit_linear,
    select_winner,
)
from .rng import Stream, derive
from .score import (
    DegradationUndefinedError,
    EvalConfig,
    ScoreError,
    evaluate,
    paired_deltas,
    write_report_files,
)
from .stats import StatsError, bootstrap_pairs, bootstrap_windows, spearman

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_DEGRADATION_UNDEFINED = 4


class _Run:
    """Loaded dataset, splits, standardized windows, and seeds for one config."""

    def __init__(self, cfg: dict, quiet: bool = False):
        self.cfg = cfg
        self.quiet = quiet
        self.n = cfg["window"]["input"]
        self.horizon = cfg["window"]["horizon"]
        self.schema = self._build_schema()
        raw = load_csv(
            cfg["dataset"]["path"],
            self.schema,
            timestamp_column=cfg["dataset"]["timestamp_column"],
            min_rows=self.n + self.horizon,
        )
        self.bounds = chronological_split(
            raw, tuple(cfg["split"]["fractions"]), n=self.n, horizon=self.horizon
        )
        self.stats = fit_standardizer(raw, self.bounds)
        self.ds = apply_standardizer(raw, self.stats)
        self.data_seed = seed_for(cfg, "data")
        self.model_seed = seed_for(cfg, "model")
        self.eval_seed = seed_for(cfg, "eval")
        self._train_pool = None

    def log(self, message: str):
        if not self.quiet:
            print(message)

    def _build_schema(self) -> ChannelSchema:
        block = self.cfg["dataset"]
        names = block["channels"]["names"]
        if names is None:
            names = peek_csv_header(block["path"], block["timestamp_column"])
        names = [str(x) for x in names]
        discrete = set(
            resolve_channel_indices(block["channels"]["discrete"], names, "discrete channel")
        )
        targets = resolve_channel_indices(block["targets"], names, "target")
        return ChannelSchema(
            names=tuple(names),
            continuous_mask=tuple(i not in discrete for i in range(len(names))),
            target_set=targets,
            m_cont_override=block["channels"]["m_cont"],
        )

    def source(self, split: str) -> WindowSource:
        starts = enumerate_windows(self.bounds, split, self.n, self.horizon)
        return WindowSource(ds=self.ds, start_indices=starts, n=self.n,
                            horizon=self.horizon)

    def train_windows(self, cap: int, seed: int) -> list:
        """Up to ``cap`` training windows, subsampled without replacement."""
        source = self.source("train")
        starts = source.start_indices
        if len(starts) > cap:
            picks = Stream(seed).subset(list(range(len(starts))), cap)
            starts = starts[sorted(picks)]
        return [source.window(s) for s in starts]

    def eval_config(self, eval_seed: int | None = None, k: int | None = None,
                    channel_rule: str | None = None) -> EvalConfig:
        block = self.cfg["eval"]
        return EvalConfig(
            k=k if k is not None else block["windows"],
            eval_seed=self.eval_seed if eval_seed is None else eval_seed,
            scenarios=tuple(parse_scenario(s) for s in block["scenarios"]),
            channel_rule=ChannelRule.parse(
                channel_rule if channel_rule is not None else block["channel_rule"]
            ),
            bootstrap=block["bootstrap"],
        )

    def selector_config(self) -> EvalConfig:
        # selection randomness is keyed by the data seed: the evaluation seed
        # is testing-only and must not move fitted winners
        return self.eval_config(
            eval_seed=derive(self.data_seed, "selector"),
            k=self.cfg["selector"]["windows"],
        )


def _candidate_builders(run: _Run, model_block: dict):
    """(id, build(seed)) pairs; build returns a fitted forecaster."""
    kind = model_block["kind"]
    schema = run.schema
    if kind == "seasonal_naive":
        periods = model_block.get("periods")
        if model_block.get("period") is not None:
            periods = [model_block["period"]]
        builders = []
        for period in periods:
            model = SeasonalNaiveForecaster(
                period=int(period), horizon=run.horizon, target_set=schema.target_set
            )
            builders.append((model.identifier, lambda seed, m=model: m))
        return builders
    if kind == "linear":
        grid = list(model_block["ridge_grid"])
        if model_block.get("ridge") is not None:
            grid = [model_block["ridge"]]
        grid = grid[: model_block["candidate_cap"]]
        cap = model_block["train_windows"]

        def make(lam):
            def build(seed):
                windows = run.train_windows(cap, seed)
                return fit_linear(windows, lam, seed)

            return build

        return [(f"linear(lambda={lam})", make(lam)) for lam in grid]
    if kind == "external":
        model = ExternalForecaster(
            command=[str(c) for c in model_block["command"]],
            n=run.n,
            horizon=run.horizon,
            channels=schema.m,
            targets=list(schema.target_set),
            timeout=model_block["timeout"],
            workers=model_block["workers"],
        )
        return [(model.identifier, lambda seed, m=model: m)]
    raise ConfigError(f"unknown model kind {kind!r}")


def _method_candidates(run: _Run, method_block: dict):
    """Fitted (id, model) candidates with the method applied."""
    model_block = run.cfg["model"]
    builders = _candidate_builders(run, model_block)
    kind = method_block["kind"]
    seed = run.model_seed
    if kind == "none":
        return [(cid, build(derive(seed, "train", cid))) for cid, build in builders]
    if kind == "ensemble":
        members = int(method_block["members"])
        aggregator = method_block["aggregator"]
        out = []
        for cid, build in builders:
            fitted = [
                build(derive(seed, "member", cid, i)) for i in range(members)
            ]
            out.append(
                (f"ensemble({cid},{members},{aggregator})",
                 EnsembleForecaster(members=fitted, aggregator=aggregator))
            )
        return out
    if kind == "smoothing":
        out = []
        for cid, build in builders:
            base = build(derive(seed, "train", cid))
            wrapped = SmoothedForecaster(
                base=base,
                sigma=method_block["sigma"],
                queries=int(method_block["queries"]),
                trim=method_block["trim"],
                seed=derive(seed, "smoothing", cid),
            )
            out.append((f"smoothed({cid},sigma={method_block['sigma']})", wrapped))
        return out
    if kind == "fault_augmentation":
        if model_block["kind"] != "linear":
            raise ConfigError("fault_augmentation requires the linear model kind")
        families = method_block["families"]
        if families is not None:
            families = tuple(parse_scenario(name) for name in families)
        cap = model_block["train_windows"]
        grid = list(model_block["ridge_grid"])
        if model_block.get("ridge") is not None:
            grid = [model_block["ridge"]]
        out = []
        for lam in grid[: model_block["candidate_cap"]]:
            train_seed = derive(seed, "fault-aug-train", repr(lam))
            windows = run.train_windows(cap, train_seed)
            kwargs = {} if families is None else {"families": families}
            model = fit_fault_augmented(
                windows, run.schema, lam, method_block["p_aug"], seed=train_seed,
                **kwargs,
            )
            out.append((f"fault_aug(lambda={lam},p={method_block['p_aug']})", model))
        return out
    raise ConfigError(f"unknown method kind {kind!r}")


def _select(run: _Run, candidates, mode: str | None = None) -> tuple[str, object]:
    if len(candidates) == 1:
        return candidates[0]
    mode = mode or run.cfg["selector"]["mode"]
    winner = select_winner(candidates, run.source("val"), mode, run.selector_config())
    return winner, dict(candidates)[winner]


def _close_all(candidates):
    for _, model in candidates:
        close = getattr(model, "close", None)
        if callable(close):
            close()


def _write_resolved_config(cfg: dict, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.yaml").write_text(dump_config(cfg))


def _evaluate_into(run: _Run, model, model_id: str, out_dir: Path, workers: int,
                   eval_cfg: EvalConfig | None = None):
    cfg = eval_cfg or run.eval_config()
    report = evaluate(
        model, run.source("test"), cfg, workers=workers, model_id=model_id,
        dataset_id=str(run.cfg["dataset"]["path"]),
    )
    if cfg.bootstrap > 0:
        report.intervals = bootstrap_windows(
            report, replicates=cfg.bootstrap, seed=derive(cfg.eval_seed, "bootstrap")
        )
    if out_dir is not None:
        write_report_files(report, out_dir)
    return report


def cmd_validate(cfg: dict, out_dir: Path | None, workers: int, quiet: bool) -> int:
    run = _Run(cfg, quiet)
    counts = {
        split: len(enumerate_windows(run.bounds, split, run.n, run.horizon))
        for split in ("train", "val", "test")
    }
    schema = run.schema
    run.log(f"dataset: {cfg['dataset']['path']}")
    run.log(f"rows N={run.ds.n_rows}  channels m={schema.m}  m_cont={schema.m_cont}  "
            f"targets={list(schema.target_set)}")
    run.log(f"splits: train_end={run.bounds.train_end} val_end={run.bounds.val_end}")
    run.log("windows per split: " +
            " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_evaluate(cfg: dict, out_dir: Path, workers: int, quiet: bool) -> int:
    run = _Run(cfg, quiet)
    _write_resolved_config(cfg, out_dir)
    candidates = _method_candidates(run, cfg["method"])
    try:
        winner_id, model = _select(run, candidates)
        run.log(f"selected: {winner_id}")
        report = _evaluate_into(run, model, winner_id, out_dir, workers)
    finally:
        _close_all(candidates)
    run.log(f"wrote {out_dir}/report.json")
    if not report.degradation_defined:
        run.log("clean MSE is zero: degradation undefined, raw MSEs reported")
        return EXIT_DEGRADATION_UNDEFINED
    run.log(f"D_w={report.d_w:.4f}  MSE_c={report.mse_c:.4f}  "
            f"MSE_w={report.mse_w:.4f}  worst={report.p_star.value}")
    return EXIT_OK


def _delta_rows(deltas):
    for d in deltas:
        yield {
            "variant": d.variant_id,
            "baseline": d.baseline_id,
            **{f: repr(getattr(d, f)) for f in type(d).NUMERIC_FIELDS},
        }


def cmd_compare(cfg: dict, out_dir: Path, workers: int, quiet: bool) -> int:
    methods = cfg.get("compare", {}).get("methods", [])
    if not methods:
        raise ConfigError("compare needs compare.methods with at least one entry")
    run = _Run(cfg, quiet)
    _write_resolved_config(cfg, out_dir)

    base_candidates = _method_candidates(run, {"kind": "none"})
    try:
        baseline_id, baseline_model = _select(run, base_candidates)
        baseline = _evaluate_into(run, baseline_model, baseline_id,
                                  out_dir / "baseline", workers)
    finally:
        _close_all(base_candidates)
    run.log(f"baseline: {baseline_id}")

    deltas = []
    for block in methods:
        from .config import _resolve_method

        method = _resolve_method(block)
        candidates = _method_candidates(run, method)
        try:
            variant_id, variant_model = _select(run, candidates)
            variant = _evaluate_into(run, variant_model, variant_id,
                                     out_dir / method["kind"], workers)
        finally:
            _close_all(candidates)
        deltas.append(paired_deltas(variant, baseline))
        run.log(f"variant {variant_id}: delta_d_w={deltas[-1].delta_d_w:+.4f}")

    fields = list(type(deltas[0]).NUMERIC_FIELDS)
    with (out_dir / "deltas.csv").open("w", newline="") as fh:
        fh.write("# negative deltas favor the variant; tau = -delta_mpc\n")
        writer = csv.DictWriter(fh, fieldnames=["variant", "baseline"] + fields)
        writer.writeheader()
        for row in _delta_rows(deltas):
            writer.writerow(row)

    if len(deltas) >= 2:
        intervals = bootstrap_pairs(
            deltas, replicates=cfg["eval"]["bootstrap"] or 1000,
            seed=derive(run.eval_seed, "pair-bootstrap"),
        )
        with (out_dir / "pair_intervals.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["statistic", "point", "lo", "hi", "level", "replicates"])
            for name, iv in intervals.items():
                writer.writerow([name, repr(iv.point), repr(iv.lo), repr(iv.hi),
                                 iv.level, iv.replicates])
    return EXIT_OK


def _sensitivity_eval_seed(run: _Run, cfg: dict, out_dir: Path, workers: int) -> int:
    listed = cfg.get("sensitivity", {}).get("eval_seeds", [])
    seeds = [run.eval_seed] + [int(s) for s in listed]
    if len(seeds) < 2:
        raise ConfigError("eval-seed mode needs sensitivity.eval_seeds with >= 1 entry")
    candidates = _method_candidates(run, cfg["method"])
    try:
        winner_id, model = _select(run, candidates)
        reports = []
        for seed in seeds:
            eval_cfg = run.eval_config(eval_seed=seed)
            eval_cfg = EvalConfig(k=eval_cfg.k, eval_seed=seed,
                                  scenarios=eval_cfg.scenarios,
                                  channel_rule=eval_cfg.channel_rule, bootstrap=0)
            reports.append(_evaluate_into(run, model, winner_id, None, workers,
                                          eval_cfg))
    finally:
        _close_all(candidates)

    with (out_dir / "eval_seed_realizations.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eval_seed", "d_w", "mse_c", "mse_w", "p_star"])
        for seed, rep in zip(seeds, reports):
            writer.writerow([seed, repr(rep.d_w), repr(rep.mse_c), repr(rep.mse_w),
                             rep.p_star.value])

    canonical, alternates = reports[0], reports[1:]
    d_w_shifts = [abs(r.d_w - canonical.d_w) for r in alternates]
    mse_w_shifts = [abs(r.mse_w - canonical.mse_w) for r in alternates]
    rhos = [
        spearman(reports[i].d_p, reports[j].d_p)
        for i in range(len(reports))
        for j in range(i + 1, len(reports))
    ]
    exact = sum(r.p_star is canonical.p_star for r in alternates)
    same_class = sum(
        SCENARIO_CLASS[r.p_star] == SCENARIO_CLASS[canonical.p_star] for r in alternates
    )
    with (out_dir / "eval_seed_summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "mean_abs_shift_d_w", "max_abs_shift_d_w",
            "mean_abs_shift_mse_w", "max_abs_shift_mse_w",
            "min_pairwise_spearman_d_p",
            "worst_scenario_exact_agreement", "worst_scenario_class_agreement",
        ])
        writer.writerow([
            repr(float(np.mean(d_w_shifts))), repr(float(np.max(d_w_shifts))),
            repr(float(np.mean(mse_w_shifts))), repr(float(np.max(mse_w_shifts))),
            repr(float(np.min(rhos))),
            f"{exact}/{len(alternates)}", f"{same_class}/{len(alternates)}",
        ])
    run.log(f"eval-seed sweep over {len(seeds)} realizations written")
    return EXIT_OK


def _sensitivity_channel_rule(run: _Run, cfg: dict, out_dir: Path, workers: int) -> int:
    fractions = cfg.get("sensitivity", {}).get("fractions", [0.25, 0.5])
    candidates = _method_candidates(run, cfg["method"])
    rules = [run.cfg["eval"]["channel_rule"]] + [f"fixed:{q}" for q in fractions]
    rows = []
    try:
        winner_id, model = _select(run, candidates)
        for rule in rules:
            eval_cfg = run.eval_config(channel_rule=rule)
            eval_cfg = EvalConfig(k=eval_cfg.k, eval_seed=eval_cfg.eval_seed,
                                  scenarios=eval_cfg.scenarios,
                                  channel_rule=eval_cfg.channel_rule, bootstrap=0)
            rep = _evaluate_into(run, model, winner_id, None, workers, eval_cfg)
            rows.append((rule, rep))
    finally:
        _close_all(candidates)
    with (out_dir / "channel_rule_sensitivity.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["channel_rule", "d_w", "mse_c", "mse_w", "p_star"])
        for rule, rep in rows:
            writer.writerow([rule, repr(rep.d_w), repr(rep.mse_c), repr(rep.mse_w),
                             rep.p_star.value])
    run.log(f"channel-rule sweep over {len(rules)} rules written")
    return EXIT_OK


def _sensitivity_selector(run: _Run, cfg: dict, out_dir: Path, workers: int) -> int:
    methods = cfg.get("compare", {}).get("methods", [])
    if not methods:
        raise ConfigError("selector mode needs compare.methods")
    from .config import _resolve_method

    base_candidates = _method_candidates(run, {"kind": "none"})
    try:
        baseline_id, baseline_model = _select(run, base_candidates, mode="clean")
        baseline = _evaluate_into(run, baseline_model, baseline_id, None, workers)
    finally:
        _close_all(base_candidates)
    rows = []
    for block in methods:
        method = _resolve_method(block)
        candidates = _method_candidates(run, method)
        try:
            for mode in ("clean", "perturbed"):
                variant_id, variant_model = _select(run, candidates, mode=mode)
                report = _evaluate_into(run, variant_model, variant_id, None, workers)
                delta = paired_deltas(report, baseline)
                rows.append((method["kind"], mode, variant_id, delta))
        finally:
            _close_all(candidates)
    with (out_dir / "selector_sensitivity.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "selector", "winner", "delta_d_w", "delta_mse_c",
                         "delta_mse_w"])
        for kind, mode, winner, delta in rows:
            writer.writerow([kind, mode, winner, repr(delta.delta_d_w),
                             repr(delta.delta_mse_c), repr(delta.delta_mse_w)])
    run.log(f"selector sweep over {len(methods)} methods written")
    return EXIT_OK


def cmd_sensitivity(cfg: dict, out_dir: Path, workers: int, quiet: bool,
                    mode: str) -> int:
    run = _Run(cfg, quiet)
    _write_resolved_config(cfg, out_dir)
    if mode == "eval-seed":
        return _sensitivity_eval_seed(run, cfg, out_dir, workers)
    if mode == "channel-rule":
        return _sensitivity_channel_rule(run, cfg, out_dir, workers)
    if mode == "selector":
        return _sensitivity_selector(run, cfg, out_dir, workers)
    raise ConfigError(f"unknown sensitivity mode {mode!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faultcast",
        description="Sensor-fault robustness evaluation for forecasters",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "load the dataset and report schema and window counts"),
        ("evaluate", "run the robustness protocol for one configured model"),
        ("compare", "evaluate method variants against the baseline"),
        ("sensitivity", "protocol sensitivity sweeps"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the YAML run config")
        cmd.add_argument("--out", default=None, help="output directory override")
        cmd.add_argument("--workers", type=int, default=1)
        cmd.add_argument("--eval-seed", type=int, default=None,
                         help="override the evaluation seed (testing-only)")
        cmd.add_argument("--quiet", action="store_true")
        if name == "sensitivity":
            cmd.add_argument("--mode", required=True,
                             choices=["eval-seed", "channel-rule", "selector"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg["output"]["dir"] = args.out
        if args.eval_seed is not None:
            cfg["seed"]["eval"] = int(args.eval_seed)
        out_dir = Path(cfg["output"]["dir"])
        if args.command == "validate":
            return cmd_validate(cfg, out_dir, args.workers, args.quiet)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out_dir, args.workers, args.quiet)
        if args.command == "compare":
            return cmd_compare(cfg, out_dir, args.workers, args.quiet)
        return cmd_sensitivity(cfg, out_dir, args.workers, args.quiet, args.mode)
    except (ConfigError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegradationUndefinedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGRADATION_UNDEFINED
    except (FitError, ProtocolViolationError, AdapterError, ScoreError,
            StatsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
