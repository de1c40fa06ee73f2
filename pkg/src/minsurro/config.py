"""Run configuration: JSON file values overridden by flat ``--key value`` pairs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Bad configuration key or value (a usage error)."""


@dataclass
class TrainRun:
    dataset: str = ""
    out: str = "train_out"
    family: str = "max_squared"
    K: int = 2
    pieces: int = 10
    alpha: float = 0.0
    coef_hidden: tuple = (16,)
    widths: tuple = (5, 5)
    n_q: int = 5
    head: str = "identity"
    head_hidden: tuple = (5, 3)
    head_activation: str = "tanh"
    shared_head: bool = False
    gamma: float = 0.1
    w1: float = 0.0
    w2: float = 0.0
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch: int = 0
    finetune_iterations: int = 5000
    restarts: int = 1
    selection: str = "train_r2"
    constraints: str = "none"  # or "box": dual columns refer to the box rows
    x_lower: tuple = ()
    x_upper: tuple = ()
    seed: int = 0


@dataclass
class SolveRun:
    model: str = ""
    p: tuple = ()
    x_lower: tuple = ()
    x_upper: tuple = ()
    rows: list = field(default_factory=list)  # [[a_0, ..., a_{n-1}, b], ...] meaning a'x <= b
    tol: float = 1e-8
    max_iters: int = 5000
    parallel: bool = True
    out: str = "solve_out"
    seed: int = 0


@dataclass
class SampleRun:
    problem: str = "camel"  # camel | ocp
    count: int = 1000
    problems: int = 10
    enlargement: float = 0.5
    out: str = "sample_out"
    seed: int = 0


@dataclass
class GradcheckRun:
    model: str = ""
    problem: str = ""  # ocp: check the OCP objective instead of a model
    x: tuple = ()
    p: tuple = ()
    h: float = 1e-5
    seed: int = 0


@dataclass
class CamelBenchRun:
    k: tuple = (1, 2, 5)
    n_samples: int = 1000
    epochs: int = 1000
    learning_rate: float = 1e-3
    finetune_iterations: int = 5000
    restarts: int = 4
    gamma: float = 0.1
    n_starts: int = 100
    out: str = "camel_out"
    plots: bool = False
    seed: int = 0


@dataclass
class OcpCollectRun:
    laps: int = 100
    problems_per_lap: int = 10
    lap_steps: int = 100
    augment: int = 300
    out: str = "ocp_out"
    seed: int = 0


@dataclass
class OcpTrainRun:
    dataset: str = ""
    out: str = "ocp_out"
    K: int = 2
    gamma: float = 0.1
    w1: float = 0.1
    w2: float = 0.1
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch: int = 0
    finetune_iterations: int = 2000
    restarts: int = 4
    seed: int = 0


@dataclass
class OcpSimRun:
    model: str = ""
    steps: int = 400
    modes: tuple = ("cold", "shifted_full", "shifted_2", "learned_full", "learned_2")
    out: str = "ocp_out"
    plots: bool = False
    seed: int = 0


def load_config_file(path) -> dict:
    """JSON object of settings; a missing file raises FileNotFoundError."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def parse_overrides(tokens: list[str]) -> dict[str, str | bool]:
    """``--key value`` pairs; a ``--flag`` followed by another option or nothing means true."""
    out: dict[str, str | bool] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
            out[key] = val
            i += 1
        elif i + 1 < len(tokens) and not (tokens[i + 1].startswith("--") and len(tokens[i + 1]) > 2):
            out[key] = tokens[i + 1]
            i += 2
        else:
            out[key] = True
            i += 1
    return out


def _coerce(key: str, default: Any, value: Any):
    if isinstance(value, str):
        text = value.strip()
    else:
        text = None
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            if text is not None and text.lower() in ("1", "true", "yes", "on"):
                return True
            if text is not None and text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value if text is None else text)
        if isinstance(default, float):
            return float(value if text is None else text)
        if isinstance(default, (tuple, list)):
            if text is not None:
                seq = json.loads(text) if text.startswith("[") else [v for v in text.split(",") if v.strip()]
            else:
                seq = value
            if not isinstance(seq, (list, tuple)):
                raise ValueError(value)
            if isinstance(default, list):
                return list(seq)
            kind = type(default[0]) if default else None
            items = [_scalar(v, kind) for v in seq]
            return tuple(items)
        return value if text is None else text
    except (TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def _scalar(v, kind):
    if kind is int:
        return int(v)
    if kind is str:
        return str(v).strip()
    return float(v)


def resolve(cls, file_values: dict | None = None, overrides: dict | None = None):
    """Build ``cls`` from defaults, then file values, then overrides; unknown keys are rejected."""
    names = {f.name: f for f in fields(cls)}
    base = cls()
    values = {}
    for source in (file_values or {}, overrides or {}):
        for key, val in source.items():
            if key not in names:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = _coerce(key, getattr(base, key), val)
    return cls(**values)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def as_array(values, n: int | None = None, name: str = "value") -> np.ndarray:
    a = np.asarray(values, dtype=float).reshape(-1)
    if n is not None and a.size != n:
        raise ConfigError(f"{name} needs {n} entries, got {a.size}")
    return a
