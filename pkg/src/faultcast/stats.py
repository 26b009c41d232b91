"""Percentile bootstrap, Spearman rank correlation, log-space least squares.

Quantiles use linear interpolation between order statistics: for sorted
samples x_1..x_N and level q, position h = (N - 1) * q, value
x_{1+floor(h)} + frac(h) * (x_{2+floor(h)} - x_{1+floor(h)}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .faults import Scenario
from .rng import Stream, derive


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    """Percentile interval around a point estimate."""

    point: float
    lo: float
    hi: float
    level: float = 0.95
    replicates: int = 0

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise StatsError("level must be in (0, 1)")
        if self.hi < self.lo:
            raise StatsError("interval endpoints out of order")


def percentile_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Empirical central interval at the given level."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise StatsError("no samples")
    if not 0.0 < level < 1.0:
        raise StatsError("level must be in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


SUMMARY_STATISTICS = ("mse_c", "d_w", "mse_w", "d_bar", "mpc", "rpc")


def _replicate_stats(
    clean: np.ndarray, perturbed: np.ndarray, scenarios: tuple[Scenario, ...]
) -> dict[str, float]:
    mse_c = float(clean.mean())
    mse_p = perturbed.mean(axis=1)
    star = int(np.argmax(mse_p))  # first max = earliest in benchmark order
    mse_w = float(mse_p[star])
    mpc = float(mse_p.mean())
    out = {"mse_c": mse_c, "mse_w": mse_w, "mpc": mpc}
    if mse_c > 0.0:
        d_p = mse_p / mse_c
        out["d_w"] = float(d_p[star])
        out["d_bar"] = float(d_p.mean())
        out["rpc"] = 1.0 / out["d_bar"]
        for j, s in enumerate(scenarios):
            out[f"d_p/{s.value}"] = float(d_p[j])
    else:
        out.update({"d_w": np.nan, "d_bar": np.nan, "rpc": np.nan})
        for s in scenarios:
            out[f"d_p/{s.value}"] = np.nan
    for j, s in enumerate(scenarios):
        out[f"mse_p/{s.value}"] = float(mse_p[j])
    return out


def bootstrap_windows(
    report,
    replicates: int = 1000,
    seed: int = 0,
    statistics: tuple[str, ...] | None = None,
    level: float = 0.95,
) -> dict[str, Interval]:
    """Window-level percentile bootstrap over one shared index pool.

    Each replicate resamples the K window indices with replacement and
    reuses that multiset jointly for the clean summary and every scenario,
    so every replicate satisfies the same internal identities as a full
    report.  Deterministic for fixed (replicates, seed).
    """
    if replicates < 1:
        raise StatsError("replicates must be >= 1")
    if statistics is None:
        statistics = SUMMARY_STATISTICS
    clean = report.clean_losses
    perturbed = report.perturbed_losses
    k = clean.shape[0]
    values: dict[str, list[float]] = {name: [] for name in statistics}
    for b in range(replicates):
        idx = Stream(derive(seed, "replicate", b)).randint_block(k, k)
        # canonical C layout: numpy reduction order follows memory layout,
        # and advanced indexing returns an F-contiguous matrix here
        resampled = np.ascontiguousarray(perturbed[:, idx])
        stats = _replicate_stats(clean[idx], resampled, report.scenarios)
        for name in statistics:
            if name not in stats:
                raise StatsError(f"unknown bootstrap statistic {name!r}")
            values[name].append(stats[name])
    point = _replicate_stats(clean, perturbed, report.scenarios)
    out = {}
    for name in statistics:
        lo, hi = percentile_interval(values[name], level)
        out[name] = Interval(point=point[name], lo=lo, hi=hi, level=level,
                             replicates=replicates)
    return out


def bootstrap_pairs(
    deltas: list,
    replicates: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> dict[str, Interval]:
    """Pair-level bootstrap of mean method-baseline deltas.

    Each replicate resamples the matched pairs with replacement and
    recomputes the mean of every delta field.
    """
    if not deltas:
        raise StatsError("no pairs")
    if replicates < 1:
        raise StatsError("replicates must be >= 1")
    fields = type(deltas[0]).NUMERIC_FIELDS
    matrix = np.array([[getattr(d, f) for f in fields] for d in deltas])
    n_pairs = matrix.shape[0]
    means = np.empty((replicates, len(fields)))
    for b in range(replicates):
        idx = Stream(derive(seed, "pair-replicate", b)).randint_block(n_pairs, n_pairs)
        means[b] = matrix[idx].mean(axis=0)
    out = {}
    for j, name in enumerate(fields):
        lo, hi = percentile_interval(means[:, j], level)
        out[name] = Interval(point=float(matrix[:, j].mean()), lo=lo, hi=hi,
                             level=level, replicates=replicates)
    return out


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatsError("inputs must be 1-D arrays of equal length")
    if len(a) < 2:
        raise StatsError("need at least 2 elements")
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0.0:
        raise StatsError("zero rank variance")
    return float((ra * rb).sum() / denom)


def logspace_fit(x, y) -> tuple[float, float]:
    """Ordinary least squares of log(y) on log(x); returns (a, b)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise StatsError("need two 1-D arrays of equal length >= 2")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise StatsError("log-space fit needs strictly positive inputs")
    lx = np.log(x)
    ly = np.log(y)
    dx = lx - lx.mean()
    var = (dx * dx).sum()
    if var == 0.0:
        raise StatsError("degenerate fit: all x values equal")
    b = float((dx * (ly - ly.mean())).sum() / var)
    a = float(ly.mean() - b * lx.mean())
    return a, b
