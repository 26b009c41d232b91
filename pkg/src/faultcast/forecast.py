"""Forecaster contract, reference models, and black-box method wrappers.

A forecaster maps one standardized input window (n x m) to a prediction
(horizon x m_tgt).  Models follow the sklearn estimator idiom (constructor
params, ``fit``/``predict``, ``get_params``) so they compose with the wider
ecosystem; fitted attributes carry the trailing underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .dataset import ChannelSchema, WindowSample, WindowSource
from .faults import BENCHMARK_SPECS, TRANSFER_FAMILIES, Scenario, apply_transfer
from .rng import Stream, derive, fnv1a64


class FitError(ValueError):
    """Raised when a model cannot be fitted (singular system, bad shapes)."""


class ProtocolViolationError(ValueError):
    """Raised when training would touch a scored benchmark scenario."""


def check_window(x: np.ndarray, n: int | None = None, m: int | None = None) -> np.ndarray:
    """Validate one input window and return it as float64."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"input window must be 2-D, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"input window has {x.shape[0]} rows, expected {n}")
    if m is not None and x.shape[1] != m:
        raise ValueError(f"input window has {x.shape[1]} channels, expected {m}")
    return x


class SeasonalNaiveForecaster(BaseEstimator):
    """Repeat the most recent block of length ``period`` over the horizon.

    period=1 is the last-value naive forecaster; period=24 repeats the most
    recent day on hourly data.
    """

    deterministic = True

    def __init__(self, period: int = 1, horizon: int = 1, target_set: tuple[int, ...] = (0,)):
        self.period = period
        self.horizon = horizon
        self.target_set = tuple(target_set)

    @property
    def identifier(self) -> str:
        return f"seasonal_naive(period={self.period})"

    def fit(self, windows=None):  # no parameters to learn
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = check_window(x)
        n = x.shape[0]
        if self.period > n:
            raise ValueError(f"period {self.period} exceeds window length {n}")
        rows = n - self.period + (np.arange(self.horizon) % self.period)
        return x[np.ix_(rows, list(self.target_set))]


class ConstantForecaster(BaseEstimator):
    """Input-ignoring forecaster that always returns a fixed matrix."""

    deterministic = True

    def __init__(self, value: np.ndarray = np.zeros((1, 1))):
        self.value = np.asarray(value, dtype=np.float64)

    @property
    def identifier(self) -> str:
        return "constant"

    def fit(self, windows=None):
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value.copy()


class RidgeForecaster(BaseEstimator):
    """Ridge regression from the flattened window to the flattened target."""

    deterministic = True

    def __init__(self, ridge_lambda: float = 1e-2, seed: int = 0):
        self.ridge_lambda = ridge_lambda
        self.seed = seed

    @property
    def identifier(self) -> str:
        return f"linear(lambda={self.ridge_lambda})"

    def fit(self, windows: list[WindowSample]) -> "RidgeForecaster":
        if not windows:
            raise FitError("no training windows")
        if self.ridge_lambda < 0:
            raise FitError("ridge_lambda must be >= 0")
        n, m = windows[0].x.shape
        horizon, m_tgt = windows[0].y.shape
        X = np.stack([w.x.ravel() for w in windows])
        Y = np.stack([w.y.ravel() for w in windows])
        x_mean = X.mean(axis=0)
        y_mean = Y.mean(axis=0)
        Xc = X - x_mean
        gram = Xc.T @ Xc + self.ridge_lambda * np.eye(X.shape[1])
        try:
            np.linalg.cholesky(gram)  # definiteness check; singular when lambda=0
            weights = np.linalg.solve(gram, Xc.T @ (Y - y_mean))
        except np.linalg.LinAlgError as exc:
            raise FitError(f"singular normal equations: {exc}") from None
        if not np.all(np.isfinite(weights)):
            raise FitError("non-finite weights; increase ridge_lambda")
        self.weights_ = weights
        self.bias_ = y_mean - x_mean @ weights
        self.input_shape_ = (n, m)
        self.output_shape_ = (horizon, m_tgt)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = check_window(x, *self.input_shape_)
        flat = x.ravel() @ self.weights_ + self.bias_
        return flat.reshape(self.output_shape_)


def fit_linear(
    windows: list[WindowSample], ridge_lambda: float, seed: int = 0
) -> RidgeForecaster:
    """Fit a ridge forecaster on the given windows."""
    return RidgeForecaster(ridge_lambda=ridge_lambda, seed=seed).fit(windows)


def fit_fault_augmented(
    windows: list[WindowSample],
    schema: ChannelSchema,
    ridge_lambda: float,
    p_aug: float,
    families: tuple[Scenario, ...] = TRANSFER_FAMILIES,
    seed: int = 0,
) -> RidgeForecaster:
    """Fit a ridge forecaster on transfer-fault-augmented training windows.

    Each window is independently perturbed with probability ``p_aug`` by one
    uniformly chosen transfer family at severity drawn uniform on [0, 1].
    Targets are never touched.  Scored benchmark scenarios are rejected:
    they are reserved for test-time scoring.
    """
    if not 0.0 <= p_aug <= 1.0:
        raise ValueError("p_aug must be in [0, 1]")
    families = tuple(families)
    if not families:
        raise ValueError("family pool must be non-empty")
    for family in families:
        if family in BENCHMARK_SPECS:
            raise ProtocolViolationError(
                f"{family.value} is a scored benchmark scenario; training may "
                "only draw from the transfer families"
            )
        if family not in TRANSFER_FAMILIES:
            raise ValueError(f"{family.value} is not a transfer family")
    augmented = []
    for idx, w in enumerate(windows):
        stream = Stream(derive(seed, "fault-aug", idx))
        if stream.uniform() < p_aug:
            family = families[stream.randint(len(families))]
            severity = stream.uniform()
            x_aug = apply_transfer(w.x, family, severity, schema, stream)
            augmented.append(WindowSample(x=x_aug, y=w.y, start_index=w.start_index))
        else:
            augmented.append(w)
    return fit_linear(augmented, ridge_lambda, seed)


def ensemble_predict(
    members: list, x: np.ndarray, aggregator: str = "mean"
) -> np.ndarray:
    """Elementwise mean or median across member predictions.

    Member outputs are reduced per coordinate in sorted order, so the result
    is exactly invariant to member permutation.
    """
    if len(members) < 2:
        raise ValueError("ensemble needs at least 2 members")
    preds = [np.asarray(member.predict(x), dtype=np.float64) for member in members]
    shape = preds[0].shape
    for p in preds:
        if p.shape != shape:
            raise ValueError(f"member prediction shapes differ: {p.shape} vs {shape}")
    stacked = np.sort(np.stack(preds), axis=0)
    if aggregator == "mean":
        return stacked.mean(axis=0)
    if aggregator == "median":
        return np.median(stacked, axis=0)
    raise ValueError(f"unknown aggregator {aggregator!r}")


class EnsembleForecaster(BaseEstimator):
    """Aggregate predictions from a fixed member list."""

    deterministic = True

    def __init__(self, members: list | None = None, aggregator: str = "mean"):
        self.members = members if members is not None else []
        self.aggregator = aggregator

    @property
    def identifier(self) -> str:
        return f"ensemble({len(self.members)},{self.aggregator})"

    def fit(self, windows=None):
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        return ensemble_predict(self.members, x, self.aggregator)


def smoothed_predict(
    base,
    x: np.ndarray,
    sigma: float,
    queries: int,
    trim: float,
    stream: Stream,
) -> np.ndarray:
    """Alpha-trimmed aggregation of noisy queries around a fixed predictor.

    ``queries`` predictions of base(x + sigma * Z) are sorted per output
    coordinate; floor(trim * queries) values are dropped from each tail and
    the rest averaged.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if queries < 1:
        raise ValueError("queries must be >= 1")
    if not 0.0 <= trim < 0.5:
        raise ValueError("trim must be in [0, 0.5)")
    preds = []
    for _ in range(queries):
        noise = stream.normals(x.size).reshape(x.shape)
        preds.append(np.asarray(base.predict(x + sigma * noise), dtype=np.float64))
    stacked = np.sort(np.stack(preds), axis=0)
    drop = int(np.floor(trim * queries))
    kept = stacked[drop : queries - drop]
    return kept.mean(axis=0)


class SmoothedForecaster(BaseEstimator):
    """Randomized-smoothing wrapper around a fixed base forecaster.

    The query noise stream is derived from (seed, content hash of x), which
    makes ``predict`` a pure function of its input.
    """

    deterministic = True

    def __init__(self, base=None, sigma: float = 0.1, queries: int = 32,
                 trim: float = 0.1, seed: int = 0):
        self.base = base
        self.sigma = sigma
        self.queries = queries
        self.trim = trim
        self.seed = seed

    @property
    def identifier(self) -> str:
        return f"smoothed({self.base.identifier},sigma={self.sigma})"

    def fit(self, windows=None):
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = check_window(x)
        stream = Stream(derive(self.seed, "smoothing", fnv1a64(x.tobytes())))
        return smoothed_predict(self.base, x, self.sigma, self.queries, self.trim, stream)


def select_seasonal_period(
    candidates: tuple[int, ...],
    val_windows: list[WindowSample],
    horizon: int,
    target_set: tuple[int, ...],
) -> int:
    """Pick the period with the lowest mean clean validation MSE.

    Exact ties go to the smaller period.
    """
    from .score import mse_target

    if not val_windows:
        raise ValueError("no validation windows")
    best_period, best_mse = None, None
    for period in sorted(candidates):
        model = SeasonalNaiveForecaster(period=period, horizon=horizon, target_set=target_set)
        losses = [mse_target(model.predict(w.x), w.y) for w in val_windows]
        mse = float(np.mean(losses))
        if best_mse is None or mse < best_mse:
            best_period, best_mse = period, mse
    return best_period


def select_winner(
    candidates: list[tuple[str, object]],
    val_source: WindowSource,
    mode: str = "clean",
    eval_config=None,
) -> str:
    """Choose a candidate id using validation windows only.

    clean mode minimizes mean clean validation MSE; perturbed mode minimizes
    the worst-scenario perturbed validation MSE computed by the scoring
    estimator on validation windows.  Exact ties resolve to the
    lexicographically smallest id.
    """
    from .score import evaluate, mse_target
    from .dataset import sample_windows

    if not candidates:
        raise ValueError("no candidates")
    if mode not in ("clean", "perturbed"):
        raise ValueError(f"unknown selector mode {mode!r}")
    if eval_config is None:
        raise ValueError("selector needs an evaluation config")

    scores: list[tuple[float, str]] = []
    if mode == "clean":
        windows = sample_windows(
            val_source, eval_config.k, derive(eval_config.eval_seed, "selector")
        )
        for cid, model in candidates:
            losses = [mse_target(model.predict(w.x), w.y) for w in windows]
            scores.append((float(np.mean(losses)), cid))
    else:
        for cid, model in candidates:
            report = evaluate(model, val_source, eval_config, model_id=cid)
            scores.append((report.mse_w, cid))
    return min(scores)[1]
