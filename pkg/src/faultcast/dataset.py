"""Dataset ingestion, chronological splitting, standardization, windowing.

The loader consumes prepared hourly CSVs (header row of channel names, one
row per hour, decimal-point reals, optional leading timestamp column).
Everything downstream works on an immutable float64 matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .rng import Stream

SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    """Raised for schema violations and malformed dataset files."""


@dataclass(frozen=True)
class ChannelSchema:
    """Channel names, continuous/discrete typing, and forecast targets.

    ``m_cont_override`` pins the continuous-channel count used by the
    severity-to-channel-count rule when it should differ from the mask sum
    (datasets whose published channel accounting is ambiguous).
    """

    names: tuple[str, ...]
    continuous_mask: tuple[bool, ...]
    target_set: tuple[int, ...]
    m_cont_override: int | None = None

    def __post_init__(self):
        m = len(self.names)
        if len(self.continuous_mask) != m:
            raise DatasetError("continuous_mask length does not match names")
        if not self.target_set:
            raise DatasetError("target_set must be non-empty")
        if len(set(self.target_set)) != len(self.target_set):
            raise DatasetError("target_set indices must be unique")
        for t in self.target_set:
            if not 0 <= t < m:
                raise DatasetError(f"target index {t} out of range for {m} channels")
        if not any(self.continuous_mask):
            raise DatasetError("at least one channel must be continuous")
        if self.m_cont_override is not None and self.m_cont_override < 1:
            raise DatasetError("m_cont_override must be >= 1")

    @property
    def m(self) -> int:
        return len(self.names)

    @property
    def m_tgt(self) -> int:
        return len(self.target_set)

    @property
    def continuous_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.continuous_mask) if c)

    @property
    def m_cont(self) -> int:
        if self.m_cont_override is not None:
            return self.m_cont_override
        return len(self.continuous_indices)


@dataclass
class TimeSeriesDataset:
    """Immutable N x m float64 matrix plus its channel schema."""

    values: np.ndarray
    schema: ChannelSchema

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DatasetError("values must be a 2-D matrix")
        if values.shape[1] != self.schema.m:
            raise DatasetError(
                f"matrix has {values.shape[1]} columns, schema has {self.schema.m}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SplitBounds:
    """Chronological row bounds: train [0, train_end), val [train_end,
    val_end), test [val_end, n_rows)."""

    train_end: int
    val_end: int
    n_rows: int

    def __post_init__(self):
        if not 0 < self.train_end < self.val_end < self.n_rows:
            raise DatasetError(
                f"invalid split bounds ({self.train_end}, {self.val_end}, {self.n_rows})"
            )

    def row_range(self, split: str) -> tuple[int, int]:
        if split == "train":
            return 0, self.train_end
        if split == "val":
            return self.train_end, self.val_end
        if split == "test":
            return self.val_end, self.n_rows
        raise DatasetError(f"unknown split {split!r}")


@dataclass(frozen=True)
class StandardizationStats:
    """Per-channel train-split mean/std, plus the target-channel slices."""

    mean: np.ndarray
    std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray


@dataclass(frozen=True)
class WindowSample:
    """One standardized input/target window pair.

    ``x`` holds dataset rows [start, start+n); ``y`` holds the target-channel
    slice of rows [start+n, start+n+horizon).
    """

    x: np.ndarray
    y: np.ndarray
    start_index: int


def load_csv(
    path: str | Path,
    schema: ChannelSchema,
    timestamp_column: bool = False,
    min_rows: int | None = None,
) -> TimeSeriesDataset:
    """Load a prepared CSV into a dataset, rejecting gaps and bad cells.

    Rows are reported 1-based counting data rows only (the header is row 0).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if timestamp_column:
            header = header[1:]
        if tuple(header) != schema.names:
            raise DatasetError(
                f"{path}: header {tuple(header)!r} does not match schema names {schema.names!r}"
            )
        rows: list[list[float]] = []
        for i, raw in enumerate(reader, start=1):
            if timestamp_column:
                raw = raw[1:]
            if len(raw) != schema.m:
                raise DatasetError(
                    f"{path}: row {i} has {len(raw)} cells, expected {schema.m}"
                )
            parsed = []
            for j, cell in enumerate(raw):
                text = cell.strip()
                if not text:
                    raise DatasetError(
                        f"{path}: empty cell at row {i}, column {schema.names[j]!r}"
                    )
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric cell {cell!r} at row {i}, "
                        f"column {schema.names[j]!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    if min_rows is not None and len(rows) < min_rows:
        raise DatasetError(
            f"{path}: {len(rows)} rows, need at least {min_rows} for the window setting"
        )
    return TimeSeriesDataset(np.array(rows, dtype=np.float64), schema)


def chronological_split(
    ds: TimeSeriesDataset,
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    n: int | None = None,
    horizon: int | None = None,
) -> SplitBounds:
    """Split rows chronologically by fractions.

    Boundaries are floors of exact decimal fractions (via their shortest
    decimal representation), so 0.6 of 17420 is 10452 rather than a float
    rounding artifact.  With ``n`` and ``horizon`` given, each split must
    host at least one full window.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise DatasetError("fractions must be three positive numbers")
    exact = [Fraction(repr(float(f))) for f in fractions]
    if abs(float(sum(exact)) - 1.0) > 1e-9:
        raise DatasetError(f"fractions {fractions} do not sum to 1")
    total = ds.n_rows
    train_end = int(exact[0] * total)
    val_end = int((exact[0] + exact[1]) * total)
    bounds = SplitBounds(train_end, val_end, total)
    if n is not None and horizon is not None:
        for split in SPLITS:
            lo, hi = bounds.row_range(split)
            if hi - lo < n + horizon:
                raise DatasetError(
                    f"{split} split has {hi - lo} rows, too short for one "
                    f"window of {n}+{horizon}"
                )
    return bounds


def fit_standardizer(ds: TimeSeriesDataset, bounds: SplitBounds) -> StandardizationStats:
    """Per-channel mean/std over the train rows only (population std).

    Zero-variance channels get std 1 so that standardization stays defined
    and constant channels map to zero-mean constants.
    """
    train = ds.values[: bounds.train_end]
    if train.shape[0] == 0:
        raise DatasetError("train segment is empty")
    mean = train.mean(axis=0)
    std = train.std(axis=0)  # ddof=0
    std = np.where(std > 0.0, std, 1.0)
    tgt = list(ds.schema.target_set)
    return StandardizationStats(
        mean=mean, std=std, target_mean=mean[tgt], target_std=std[tgt]
    )


def apply_standardizer(
    ds: TimeSeriesDataset, stats: StandardizationStats
) -> TimeSeriesDataset:
    """Return a new dataset with every cell mapped to (x - mean) / std."""
    if stats.mean.shape != (ds.schema.m,) or stats.std.shape != (ds.schema.m,):
        raise DatasetError("standardizer dimensionality does not match dataset")
    return TimeSeriesDataset((ds.values - stats.mean) / stats.std, ds.schema)


def destandardize(
    ds: TimeSeriesDataset, stats: StandardizationStats
) -> TimeSeriesDataset:
    """Inverse of :func:`apply_standardizer`."""
    if stats.mean.shape != (ds.schema.m,):
        raise DatasetError("standardizer dimensionality does not match dataset")
    return TimeSeriesDataset(ds.values * stats.std + stats.mean, ds.schema)


def enumerate_windows(
    bounds: SplitBounds, split: str, n: int, horizon: int
) -> np.ndarray:
    """Ordered start indices whose input AND target rows fit in the split.

    ``split`` may be "train", "val", "test", or "all" for the whole series.
    Strict containment means no window straddles a split boundary.
    """
    if split == "all":
        lo, hi = 0, bounds.n_rows
    else:
        lo, hi = bounds.row_range(split)
    last = hi - n - horizon
    if last < lo:
        raise DatasetError(
            f"split {split!r} is too short for windows of {n}+{horizon}"
        )
    return np.arange(lo, last + 1, dtype=np.int64)


@dataclass(frozen=True)
class WindowSource:
    """Materializes (x, y) windows from a standardized dataset."""

    ds: TimeSeriesDataset
    start_indices: np.ndarray
    n: int
    horizon: int
    _targets: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_targets", list(self.ds.schema.target_set))
        if len(self.start_indices) == 0:
            raise DatasetError("window source has no start indices")

    def window(self, start: int) -> WindowSample:
        values = self.ds.values
        x = values[start : start + self.n].copy()
        y = values[start + self.n : start + self.n + self.horizon][:, self._targets].copy()
        return WindowSample(x=x, y=y, start_index=int(start))


def sample_windows(
    source: WindowSource, count: int, seed: int
) -> list[WindowSample]:
    """``count`` i.i.d. uniform-with-replacement draws from the source.

    Deterministic for a fixed seed: draw i is the i-th output of the pinned
    stream, reduced to an index into the ordered start set.
    """
    if count < 1:
        raise DatasetError("count must be >= 1")
    picks = Stream(seed).randint_block(len(source.start_indices), count)
    starts = source.start_indices[picks]
    return [source.window(s) for s in starts]
