"""Run configuration: YAML schema, defaults, validation, seed derivation.

A run config is one human-editable YAML file.  Loading resolves every
default so the config written next to a run's outputs reproduces the run
bit-for-bit.  Master seed 42 derives the data / model / eval seeds through
the pinned stream-derivation function; any of the three can be overridden
explicitly.
"""

from __future__ import annotations

import copy
import csv
from pathlib import Path

import yaml

from .faults import BENCHMARK_ORDER, ChannelRule, parse_scenario
from .rng import derive


class ConfigError(ValueError):
    pass


_MODEL_DEFAULTS = {
    "seasonal_naive": {"periods": [1, 24]},
    "linear": {
        "ridge_grid": [1e-3, 1e-2, 1e-1],
        "candidate_cap": 6,
        "train_windows": 10_000,
    },
    "external": {"command": None, "timeout": 60.0, "workers": 1},
}

_METHOD_DEFAULTS = {
    "none": {},
    "ensemble": {"members": 3, "aggregator": "mean"},
    "smoothing": {"sigma": 0.1, "queries": 32, "trim": 0.1},
    "fault_augmentation": {"p_aug": 0.5, "families": None},
}

DEFAULTS = {
    "dataset": {
        "path": None,
        "timestamp_column": False,
        "targets": None,
        "channels": {"names": None, "discrete": [], "m_cont": None},
    },
    "window": {"input": 96, "horizon": 6},
    "split": {"fractions": [0.6, 0.2, 0.2]},
    "eval": {
        "windows": 10_000,
        "scenarios": [s.value for s in BENCHMARK_ORDER],
        "channel_rule": "coupled",
        "bootstrap": 1000,
    },
    "seed": {"master": 42, "data": None, "model": None, "eval": None},
    "model": {"kind": "seasonal_naive"},
    "method": {"kind": "none"},
    "selector": {"mode": "clean", "windows": 500},
    "output": {"dir": "out"},
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            out[key] = copy.deepcopy(value)
        elif isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{path}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate; returns the fully resolved config dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    cfg = _merge(DEFAULTS, raw)

    if not cfg["dataset"]["path"]:
        raise ConfigError("dataset.path is required")
    if cfg["dataset"]["targets"] in (None, []):
        raise ConfigError("dataset.targets is required")

    n = cfg["window"]["input"]
    horizon = cfg["window"]["horizon"]
    if not (isinstance(n, int) and n >= 2 and isinstance(horizon, int) and horizon >= 1):
        raise ConfigError("window.input must be >= 2 and window.horizon >= 1")

    fr = cfg["split"]["fractions"]
    if len(fr) != 3 or any(f <= 0 for f in fr):
        raise ConfigError("split.fractions must be three positive numbers")

    if cfg["eval"]["windows"] < 1:
        raise ConfigError("eval.windows must be >= 1")
    if cfg["eval"]["bootstrap"] < 0:
        raise ConfigError("eval.bootstrap must be >= 0")
    try:
        for name in cfg["eval"]["scenarios"]:
            scenario = parse_scenario(name)
            if scenario not in BENCHMARK_ORDER:
                raise ConfigError(f"{name} is not a scored benchmark scenario")
        ChannelRule.parse(cfg["eval"]["channel_rule"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    kind = cfg["model"].get("kind")
    if kind not in _MODEL_DEFAULTS:
        raise ConfigError(f"unknown model kind {kind!r}")
    cfg["model"] = _merge({"kind": kind, **_MODEL_DEFAULTS[kind]}, cfg["model"])
    if kind == "external" and not cfg["model"]["command"]:
        raise ConfigError("external model needs model.command")

    cfg["method"] = _resolve_method(cfg["method"])
    for extra in cfg.get("compare", {}).get("methods", []):
        _resolve_method(extra)

    if cfg["selector"]["mode"] not in ("clean", "perturbed"):
        raise ConfigError("selector.mode must be clean or perturbed")
    if cfg["selector"]["windows"] < 1:
        raise ConfigError("selector.windows must be >= 1")
    return cfg


def _resolve_method(block: dict) -> dict:
    kind = block.get("kind", "none")
    if kind not in _METHOD_DEFAULTS:
        raise ConfigError(f"unknown method kind {kind!r}")
    return _merge({"kind": kind, **_METHOD_DEFAULTS[kind]}, block)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return resolve_config(raw or {})


def dump_config(cfg: dict) -> str:
    """Canonical YAML serialization of a resolved config."""
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def seed_for(cfg: dict, role: str) -> int:
    """Role seed: explicit override if set, else derived from the master."""
    if role not in ("data", "model", "eval"):
        raise ConfigError(f"unknown seed role {role!r}")
    explicit = cfg["seed"].get(role)
    if explicit is not None:
        return int(explicit)
    return derive(int(cfg["seed"]["master"]), role)


def peek_csv_header(path: str | Path, timestamp_column: bool) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise ConfigError(f"{path}: empty file")
    return header[1:] if timestamp_column else list(header)


def resolve_channel_indices(
    tokens: list, names: list[str], what: str
) -> tuple[int, ...]:
    """Map channel names or 0-based indices to index tuples."""
    out = []
    for token in tokens:
        if isinstance(token, int):
            if not 0 <= token < len(names):
                raise ConfigError(f"{what} index {token} out of range")
            out.append(token)
        elif token in names:
            out.append(names.index(token))
        else:
            raise ConfigError(f"{what} {token!r} not among channels {names}")
    return tuple(out)
