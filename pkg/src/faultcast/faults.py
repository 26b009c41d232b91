"""Seeded sensor-fault transformations of standardized input windows.

Eight scored benchmark scenarios (value / timing / availability faults) and
seven training-only transfer families.  Every transformation is a pure
function of (window, draw); the draw carries all randomness, so application
is reproducible and safe to parallelize.

Index conventions follow the protocol definitions: time windows are stated
1-based with start ``a >= 2`` so the preceding row ``a - 1`` always exists
(availability faults forward-fill from it).  Apply functions translate to
0-based array indexing internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import ChannelSchema
from .rng import Stream


class Scenario(str, Enum):
    """Scored benchmark scenarios plus training-only transfer families."""

    DRIFT = "Drift"
    ATTENUATION = "Attenuation"
    NOISE = "Noise"
    SPIKE = "Spike"
    TIME_STRETCH = "TimeStretch"
    TIME_COMPRESS = "TimeCompress"
    STUCK_SENSOR = "StuckSensor"
    MISSING_DATA = "MissingData"
    LINEAR_DRIFT = "LinearDrift"
    NONLINEAR_DRIFT = "NonlinearDrift"
    SCALING = "Scaling"
    TIME_VARYING_SCALING = "TimeVaryingScaling"
    TRIMMING_CONSTANT = "TrimmingConstant"
    TRIMMING_VARYING = "TrimmingVarying"
    PACKET_LOSS = "PacketLoss"


# Fixed benchmark order; used for iteration and for breaking exact ties.
BENCHMARK_ORDER: tuple[Scenario, ...] = (
    Scenario.DRIFT,
    Scenario.ATTENUATION,
    Scenario.NOISE,
    Scenario.SPIKE,
    Scenario.TIME_STRETCH,
    Scenario.TIME_COMPRESS,
    Scenario.STUCK_SENSOR,
    Scenario.MISSING_DATA,
)

TRANSFER_FAMILIES: tuple[Scenario, ...] = (
    Scenario.LINEAR_DRIFT,
    Scenario.NONLINEAR_DRIFT,
    Scenario.SCALING,
    Scenario.TIME_VARYING_SCALING,
    Scenario.TRIMMING_CONSTANT,
    Scenario.TRIMMING_VARYING,
    Scenario.PACKET_LOSS,
)

SCENARIO_CLASS = {
    Scenario.DRIFT: "value",
    Scenario.ATTENUATION: "value",
    Scenario.NOISE: "value",
    Scenario.SPIKE: "value",
    Scenario.TIME_STRETCH: "timing",
    Scenario.TIME_COMPRESS: "timing",
    Scenario.STUCK_SENSOR: "availability",
    Scenario.MISSING_DATA: "availability",
}


def benchmark_ordinal(scenario: Scenario) -> int:
    return BENCHMARK_ORDER.index(scenario)


def parse_scenario(name: str) -> Scenario:
    try:
        return Scenario(name)
    except ValueError:
        raise ValueError(f"unknown scenario name {name!r}") from None


class WindowRule(str, Enum):
    FULL_WINDOW = "full-window"
    SINGLE_STEP = "single-step"
    SHARED_FIXED_HALF = "shared-fixed-half"
    PER_CHANNEL_FRACTION = "per-channel-fraction"
    SHARED_FRACTION = "shared-fraction"


@dataclass(frozen=True)
class ScenarioSpec:
    """Endpoints, channel scope, and window rule for one scenario."""

    id: Scenario
    theta_min: float
    theta_max: float
    all_channels: bool
    window_rule: WindowRule


BENCHMARK_SPECS: dict[Scenario, ScenarioSpec] = {
    spec.id: spec
    for spec in (
        ScenarioSpec(Scenario.DRIFT, 0.0, 0.75, False, WindowRule.FULL_WINDOW),
        ScenarioSpec(Scenario.ATTENUATION, 1.0, 0.25, False, WindowRule.FULL_WINDOW),
        ScenarioSpec(Scenario.NOISE, 0.0, 1.0, False, WindowRule.FULL_WINDOW),
        ScenarioSpec(Scenario.SPIKE, 0.0, 7.5, False, WindowRule.SINGLE_STEP),
        ScenarioSpec(Scenario.TIME_STRETCH, 1.0, 5.0, False, WindowRule.SHARED_FIXED_HALF),
        ScenarioSpec(Scenario.TIME_COMPRESS, 1.0, 0.1, False, WindowRule.SHARED_FIXED_HALF),
        ScenarioSpec(Scenario.STUCK_SENSOR, 0.0, 1.0, False, WindowRule.PER_CHANNEL_FRACTION),
        ScenarioSpec(Scenario.MISSING_DATA, 0.0, 0.5, True, WindowRule.SHARED_FRACTION),
    )
}


@dataclass(frozen=True)
class ChannelRule:
    """Severity-to-affected-channel-count rule.

    "coupled" grows the affected fraction with severity up to gamma_max;
    "fixed" uses a constant fraction q for every positive severity.
    """

    mode: str = "coupled"
    gamma_max: float = 0.5
    q: float | None = None

    def __post_init__(self):
        if self.mode not in ("coupled", "fixed"):
            raise ValueError(f"unknown channel rule mode {self.mode!r}")
        if not 0.0 < self.gamma_max <= 1.0:
            raise ValueError("gamma_max must be in (0, 1]")
        if self.mode == "fixed":
            if self.q is None or not 0.0 < self.q <= self.gamma_max:
                raise ValueError("fixed mode needs 0 < q <= gamma_max")

    @classmethod
    def parse(cls, text: str) -> "ChannelRule":
        """Parse config spellings "coupled" or "fixed:<q>"."""
        if text == "coupled":
            return cls()
        if text.startswith("fixed:"):
            return cls(mode="fixed", q=float(text.split(":", 1)[1]))
        raise ValueError(f"unknown channel rule {text!r}")

    def spelling(self) -> str:
        return "coupled" if self.mode == "coupled" else f"fixed:{self.q}"

    def count(self, severity: float, m_cont: int) -> int:
        if self.mode == "coupled":
            return channel_count(severity, m_cont, self.gamma_max)
        return channel_count_fixed(severity, m_cont, self.q)


def severity_map(spec: ScenarioSpec, severity: float) -> float:
    """Linear interpolation between the scenario's endpoints.

    Evaluated in the endpoint-exact form (1-s)*min + s*max so both endpoints
    are reproduced without rounding.
    """
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity {severity} outside [0, 1]")
    return (1.0 - severity) * spec.theta_min + severity * spec.theta_max


def channel_count(severity: float, m_cont: int, gamma_max: float = 0.5) -> int:
    """Coupled rule: 0 at severity 0, else 1 + floor(s * (cap - 1))."""
    if m_cont < 1:
        raise ValueError("m_cont must be >= 1")
    if severity == 0.0:
        return 0
    cap = math.ceil(gamma_max * m_cont)
    return 1 + math.floor(severity * (cap - 1))


def channel_count_fixed(severity: float, m_cont: int, q: float) -> int:
    """Fixed-fraction rule: 0 at severity 0, else ceil(q * m_cont)."""
    if m_cont < 1:
        raise ValueError("m_cont must be >= 1")
    if severity == 0.0:
        return 0
    return math.ceil(q * m_cont)


@dataclass(frozen=True)
class PerturbationDraw:
    """One realized perturbation: severity, parameter, and placement.

    Time indices are 1-based protocol indices: ``window_start`` and each
    ``channel_starts`` entry satisfy a >= 2; ``spike_steps`` lie in {2..n}.
    ``channels`` are 0-based column indices.
    """

    scenario: Scenario
    severity: float
    theta: float
    channels: tuple[int, ...]
    window_start: int | None = None
    window_length: int = 0
    channel_starts: tuple[int, ...] | None = None
    spike_steps: tuple[int, ...] | None = None
    noise: np.ndarray | None = None


def draw_perturbation(
    spec: ScenarioSpec,
    rule: ChannelRule,
    severity: float,
    n: int,
    schema: ChannelSchema,
    stream: Stream,
) -> PerturbationDraw:
    """Realize channel subset, window placement, and auxiliary noise.

    Stream consumption order is fixed: channel subset first, then window
    placement (per-channel draws in subset order), then the noise matrix.
    """
    if n < 2:
        raise ValueError("window length must be >= 2")
    theta = severity_map(spec, severity)

    if spec.all_channels:
        channels = tuple(range(schema.m))
    else:
        pool = list(schema.continuous_indices)
        if not pool:
            raise ValueError("no continuous channels available")
        k = min(rule.count(severity, schema.m_cont), len(pool))
        channels = stream.subset(pool, k)

    window_start = None
    window_length = 0
    channel_starts = None
    spike_steps = None
    noise = None

    rule_kind = spec.window_rule
    if rule_kind is WindowRule.FULL_WINDOW:
        window_start, window_length = 1, n
    elif rule_kind is WindowRule.SINGLE_STEP:
        spike_steps = tuple(2 + stream.randint(n - 1) for _ in channels)
    elif rule_kind is WindowRule.SHARED_FIXED_HALF:
        window_length = math.ceil(n / 2)
        window_start = 2 + stream.randint(n - window_length)
    elif rule_kind is WindowRule.PER_CHANNEL_FRACTION:
        window_length = math.ceil(theta * (n - 1))
        assert window_length <= n - 1
        if window_length > 0:
            channel_starts = tuple(
                2 + stream.randint(n - window_length) for _ in channels
            )
    elif rule_kind is WindowRule.SHARED_FRACTION:
        window_length = math.ceil(theta * (n - 1))
        assert window_length <= n - 1
        if window_length > 0:
            window_start = 2 + stream.randint(n - window_length)

    if spec.id is Scenario.NOISE and channels:
        flat = stream.normals(n * len(channels))
        noise = flat.reshape(n, len(channels))

    return PerturbationDraw(
        scenario=spec.id,
        severity=severity,
        theta=theta,
        channels=channels,
        window_start=window_start,
        window_length=window_length,
        channel_starts=channel_starts,
        spike_steps=spike_steps,
        noise=noise,
    )


def interp(x: np.ndarray, tau: float) -> float:
    """Endpoint-clipped linear interpolation at 1-based position ``tau``."""
    n = len(x)
    if n == 0:
        raise ValueError("empty vector")
    t = min(float(n), max(1.0, tau))
    lo = math.floor(t)
    hi = math.ceil(t)
    lam = t - lo
    return (1.0 - lam) * x[lo - 1] + lam * x[hi - 1]


def warp_segment(
    column: np.ndarray, a: int, length: int, rho: float
) -> np.ndarray:
    """Replace rows a..a+length-1 (1-based) with the column read at rate rho.

    Output position i (1-based within the segment) reads source position
    a - 1 + i/rho with endpoint-clipped linear interpolation.  rho = 1 is the
    identity on the segment.
    """
    n = len(column)
    out = column.copy()
    if length == 0:
        return out
    taus = (a - 1) + np.arange(1, length + 1, dtype=np.float64) / rho
    taus = np.clip(taus, 1.0, float(n))
    lo = np.floor(taus).astype(np.int64)
    hi = np.ceil(taus).astype(np.int64)
    lam = taus - lo
    out[a - 1 : a - 1 + length] = (1.0 - lam) * column[lo - 1] + lam * column[hi - 1]
    return out


def apply_drift(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    if draw.channels:
        out[:, list(draw.channels)] += draw.theta
    return out


def apply_attenuation(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    if draw.channels:
        out[:, list(draw.channels)] *= draw.theta
    return out


def apply_noise(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    if draw.channels:
        if draw.noise is None:
            raise ValueError("noise draw is missing its auxiliary matrix")
        out[:, list(draw.channels)] += draw.theta * draw.noise
    return out


def apply_spike(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    if draw.channels:
        for step, ch in zip(draw.spike_steps, draw.channels):
            out[step - 1, ch] += draw.theta
    return out


def apply_timewarp(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    for ch in draw.channels:
        out[:, ch] = warp_segment(
            x[:, ch], draw.window_start, draw.window_length, draw.theta
        )
    return out


def apply_stuck(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    if draw.window_length > 0 and draw.channels:
        for a, ch in zip(draw.channel_starts, draw.channels):
            out[a - 1 : a - 1 + draw.window_length, ch] = x[a - 2, ch]
    return out


def apply_missing(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    out = x.copy()
    if draw.window_length > 0:
        a = draw.window_start
        out[a - 1 : a - 1 + draw.window_length, :] = x[a - 2, :]
    return out


_APPLY = {
    Scenario.DRIFT: apply_drift,
    Scenario.ATTENUATION: apply_attenuation,
    Scenario.NOISE: apply_noise,
    Scenario.SPIKE: apply_spike,
    Scenario.TIME_STRETCH: apply_timewarp,
    Scenario.TIME_COMPRESS: apply_timewarp,
    Scenario.STUCK_SENSOR: apply_stuck,
    Scenario.MISSING_DATA: apply_missing,
}


def apply_scenario(x: np.ndarray, draw: PerturbationDraw) -> np.ndarray:
    """Dispatch on the draw's scenario; never touches targets."""
    return _APPLY[draw.scenario](x, draw)


def perturb(
    x: np.ndarray,
    scenario: Scenario,
    rule: ChannelRule,
    severity: float,
    schema: ChannelSchema,
    stream: Stream,
) -> np.ndarray:
    """Draw and apply one benchmark perturbation in a single call."""
    spec = BENCHMARK_SPECS[scenario]
    draw = draw_perturbation(spec, rule, severity, x.shape[0], schema, stream)
    return apply_scenario(x, draw)


def draw_mask(draw: PerturbationDraw, n: int, m: int) -> np.ndarray:
    """Boolean mask of entries the draw MAY modify (the set S x u)."""
    mask = np.zeros((n, m), dtype=bool)
    if draw.scenario is Scenario.MISSING_DATA:
        if draw.window_length > 0:
            a = draw.window_start
            mask[a - 1 : a - 1 + draw.window_length, :] = True
        return mask
    if not draw.channels:
        return mask
    cols = list(draw.channels)
    if draw.spike_steps is not None:
        for step, ch in zip(draw.spike_steps, draw.channels):
            mask[step - 1, ch] = True
    elif draw.channel_starts is not None:
        for a, ch in zip(draw.channel_starts, draw.channels):
            mask[a - 1 : a - 1 + draw.window_length, ch] = True
    elif draw.window_start is not None and draw.window_length > 0:
        a = draw.window_start
        mask[a - 1 : a - 1 + draw.window_length, cols] = True
    return mask


# Transfer-family endpoint parameters (benign -> strongest), all applied to
# continuous channels only.  Severity interpolates linearly.
_TRANSFER_ENDPOINTS = {
    Scenario.LINEAR_DRIFT: {"final_offset": (0.0, 1.0)},
    Scenario.NONLINEAR_DRIFT: {"linear": (0.0, 0.5), "quadratic": (0.0, 0.5)},
    Scenario.SCALING: {"multiplier": (1.0, 2.0)},
    Scenario.TIME_VARYING_SCALING: {"final_multiplier": (1.0, 2.0)},
    Scenario.TRIMMING_CONSTANT: {"bound": (3.0, 1.0)},
    Scenario.TRIMMING_VARYING: {"bound": (3.0, 1.0), "damping": (1.0, 0.6)},
    Scenario.PACKET_LOSS: {"start": (0.0, 0.25), "continuation": (0.0, 0.9)},
}


def transfer_params(family: Scenario, severity: float) -> dict[str, float]:
    """Severity-interpolated parameters for one transfer family."""
    if family not in _TRANSFER_ENDPOINTS:
        raise ValueError(f"{family.value} is not a transfer family")
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity {severity} outside [0, 1]")
    return {
        name: (1.0 - severity) * lo + severity * hi
        for name, (lo, hi) in _TRANSFER_ENDPOINTS[family].items()
    }


def _packet_loss_column(
    column: np.ndarray, p_start: float, p_cont: float, stream: Stream
) -> np.ndarray:
    """Forward-filled loss bursts: one anchored start, then per-step draws.

    The first burst is anchored at 1-based step max(2, floor(p_start*n)+1).
    From the next step on, a burst continues with probability p_cont; outside
    a burst, a new one starts with probability p_start.  Lost steps repeat
    the last delivered value.
    """
    n = len(column)
    out = column.copy()
    anchor = max(2, math.floor(p_start * n) + 1)
    if anchor > n:
        return out
    lost = np.zeros(n + 1, dtype=bool)  # 1-based
    lost[anchor] = True
    in_burst = True
    for i in range(anchor + 1, n + 1):
        u = stream.uniform()
        if in_burst:
            in_burst = u < p_cont
        else:
            in_burst = u < p_start
        lost[i] = in_burst
    last = out[anchor - 2]
    for i in range(anchor, n + 1):
        if lost[i]:
            out[i - 1] = last
        else:
            last = out[i - 1]
    return out


def apply_transfer(
    x: np.ndarray,
    family: Scenario,
    severity: float,
    schema: ChannelSchema,
    stream: Stream,
    gamma_max: float = 0.5,
) -> np.ndarray:
    """Apply one training-only transfer family to a standardized window.

    The affected continuous-channel subset follows the coupled channel-count
    rule; targets are never touched (the caller only hands over X).
    """
    if family not in _TRANSFER_ENDPOINTS:
        raise ValueError(f"{family.value} is not a transfer family")
    n = x.shape[0]
    pool = list(schema.continuous_indices)
    k = min(channel_count(severity, schema.m_cont, gamma_max), len(pool))
    channels = stream.subset(pool, k)
    params = transfer_params(family, severity)
    out = x.copy()
    if not channels:
        return out
    cols = list(channels)
    ramp = np.arange(n, dtype=np.float64) / (n - 1)  # (i-1)/(n-1), 1-based i

    if family is Scenario.LINEAR_DRIFT:
        out[:, cols] += params["final_offset"] * ramp[:, None]
    elif family is Scenario.NONLINEAR_DRIFT:
        out[:, cols] += (params["linear"] * ramp + params["quadratic"] * ramp**2)[:, None]
    elif family is Scenario.SCALING:
        out[:, cols] *= params["multiplier"]
    elif family is Scenario.TIME_VARYING_SCALING:
        gain = 1.0 + (params["final_multiplier"] - 1.0) * ramp
        out[:, cols] *= gain[:, None]
    elif family is Scenario.TRIMMING_CONSTANT:
        bound = params["bound"]
        out[:, cols] = np.clip(out[:, cols], -bound, bound)
    elif family is Scenario.TRIMMING_VARYING:
        bound, damp = params["bound"], params["damping"]
        block = out[:, cols]
        over = np.abs(block) > bound
        shrunk = np.sign(block) * (bound + damp * (np.abs(block) - bound))
        out[:, cols] = np.where(over, shrunk, block)
    elif family is Scenario.PACKET_LOSS:
        for ch in channels:
            out[:, ch] = _packet_loss_column(
                x[:, ch], params["start"], params["continuation"], stream
            )
    return out
