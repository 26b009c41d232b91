import math

import numpy as np
import pytest

from faultcast.dataset import (
    ChannelSchema,
    TimeSeriesDataset,
    WindowSource,
    apply_standardizer,
    chronological_split,
    enumerate_windows,
    fit_standardizer,
)


def make_schema(m=4, targets=(0,), discrete=(), m_cont_override=None):
    names = tuple(f"ch{i}" for i in range(m))
    mask = tuple(i not in discrete for i in range(m))
    return ChannelSchema(
        names=names,
        continuous_mask=mask,
        target_set=tuple(targets),
        m_cont_override=m_cont_override,
    )


def make_dataset(n_rows=400, m=4, seed=7, targets=(0,), discrete=(), kind="walk"):
    """Synthetic hourly-ish dataset: random walk or white noise channels."""
    rng = np.random.default_rng(seed)
    if kind == "walk":
        values = np.cumsum(rng.normal(size=(n_rows, m)), axis=0)
    elif kind == "noise":
        values = rng.normal(size=(n_rows, m))
    else:
        raise ValueError(kind)
    return TimeSeriesDataset(values, make_schema(m, targets, discrete))


def standardized_source(ds, split="test", n=24, horizon=6, fractions=(0.6, 0.2, 0.2)):
    bounds = chronological_split(ds, fractions)
    stats = fit_standardizer(ds, bounds)
    std = apply_standardizer(ds, stats)
    starts = enumerate_windows(bounds, split, n, horizon)
    return WindowSource(ds=std, start_indices=starts, n=n, horizon=horizon)


def ulps_apart(a: float, b: float) -> int:
    """Distance in units of last place between two finite floats."""
    if a == b:
        return 0
    lo, hi = sorted((a, b))
    count = 0
    x = lo
    while x < hi and count <= 64:
        x = math.nextafter(x, math.inf)
        count += 1
    return count


@pytest.fixture
def small_source():
    return standardized_source(make_dataset(n_rows=400, m=4), n=24, horizon=6)
