"""Model files (JSON), datasets and training histories (CSV)."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .components import ComponentSpec, ContractError, HeadSpec
from .data import TrainingDataset
from .model import Architecture, SurrogateModel, init_params
from .training import HISTORY_COLUMNS

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


# -- models -------------------------------------------------------------------


def _tuple(v):
    return tuple(_tuple(a) for a in v) if isinstance(v, (list, tuple)) else v


def architecture_to_dict(arch: Architecture) -> dict:
    return {
        "n_x": arch.n_x,
        "n_p": arch.n_p,
        "components": [asdict(c) for c in arch.components],
        "heads": [asdict(h) for h in arch.heads],
        "shared_head": arch.shared_head,
        "gamma": arch.gamma,
        "x_bounds": None if arch.x_bounds is None else [list(b) for b in arch.x_bounds],
        "p_bounds": None if arch.p_bounds is None else [list(b) for b in arch.p_bounds],
    }


def architecture_from_dict(d: dict) -> Architecture:
    try:
        comps = tuple(ComponentSpec(**{k: _tuple(v) for k, v in c.items()}) for c in d["components"])
        heads = tuple(HeadSpec(**{k: _tuple(v) for k, v in h.items()}) for h in d["heads"])
        return Architecture(
            int(d["n_x"]),
            int(d["n_p"]),
            comps,
            heads,
            bool(d["shared_head"]),
            float(d["gamma"]),
            None if d["x_bounds"] is None else _tuple(d["x_bounds"]),
            None if d["p_bounds"] is None else _tuple(d["p_bounds"]),
        )
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"model file schema violation: {exc}") from exc


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(a) for k, a in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(a) for a in v]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    return v


def model_to_dict(model: SurrogateModel) -> dict:
    theta = model.theta
    if not np.all(np.isfinite(theta)):
        raise ModelFileError("refusing to save non-finite parameters")
    return {
        "format_version": FORMAT_VERSION,
        "architecture": architecture_to_dict(model.arch),
        "n_theta": int(theta.size),
        "theta": [float(t) for t in theta],
        "metadata": _plain(model.metadata),
    }


def save_model(model: SurrogateModel, path) -> None:
    """Self-describing JSON; floats use the shortest repr, so the round trip is exact."""
    text = json.dumps(model_to_dict(model), indent=1, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def _reject_constant(name):
    raise ModelFileError(f"non-finite value {name} in model file")


def model_from_dict(d: dict) -> SurrogateModel:
    if not isinstance(d, dict) or "format_version" not in d:
        raise ModelFileError("model file schema violation: missing format_version")
    if d["format_version"] != FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {d['format_version']!r} (expected {FORMAT_VERSION})")
    for key in ("architecture", "theta"):
        if key not in d:
            raise ModelFileError(f"model file schema violation: missing {key!r}")
    arch = architecture_from_dict(d["architecture"])
    theta = np.asarray(d["theta"], dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ModelFileError("non-finite parameter values")
    model = SurrogateModel(arch, init_params(arch, 0), dict(d.get("metadata", {})))
    if theta.shape != (model.n_theta,):
        raise ModelFileError(f"theta length mismatch: expected {model.n_theta}, got {theta.size}")
    model.set_theta(theta)
    return model


def load_model(path) -> SurrogateModel:
    try:
        d = json.loads(Path(path).read_text(), parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file schema violation: {exc}") from exc
    return model_from_dict(d)


# -- datasets -------------------------------------------------------------------


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def dataset_header(ds: TrainingDataset) -> list[str]:
    cols = [f"x{j}" for j in range(ds.n_x)] + [f"p{j}" for j in range(ds.n_p)] + ["f"]
    if ds.grad is not None:
        cols += [f"g{j}" for j in range(ds.n_x)]
    if ds.dual is not None:
        cols += [f"lam{j}" for j in range(ds.m)]
    return cols + ["is_optimal"]


def write_dataset(ds: TrainingDataset, path) -> None:
    """CSV with one row per record; missing optional values are written as nan."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(dataset_header(ds)) + "\n")
        for k in range(len(ds)):
            parts = [ds.x[k], ds.p[k], [ds.f[k]]]
            if ds.grad is not None:
                parts.append(ds.grad[k])
            if ds.dual is not None:
                parts.append(ds.dual[k])
            vals = [_fmt(v) for part in parts for v in part]
            vals.append("1" if ds.is_optimal[k] else "0")
            fh.write(",".join(vals) + "\n")


def _group(header: list[str], prefix: str) -> list[int]:
    idx = []
    j = 0
    while f"{prefix}{j}" in header:
        idx.append(header.index(f"{prefix}{j}"))
        j += 1
    return idx


def read_dataset(path) -> TrainingDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    if "f" not in header:
        raise DatasetFormatError("missing mandatory column 'f'")
    xi, pi, gi, li = (_group(header, pre) for pre in ("x", "p", "g", "lam"))
    if not xi:
        raise DatasetFormatError("missing mandatory column 'x0'")
    known = set(xi + pi + gi + li + [header.index("f")])
    opt_i = header.index("is_optimal") if "is_optimal" in header else None
    if opt_i is not None:
        known.add(opt_i)
    extra = [h for k, h in enumerate(header) if k not in known]
    if extra:
        raise DatasetFormatError(f"unknown column {extra[0]!r}")
    data = np.empty((len(rows), len(header)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DatasetFormatError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        try:
            data[r - 1] = [float(v) for v in row]
        except ValueError as exc:
            raise DatasetFormatError(f"row {r}: {exc}") from None
    mandatory = xi + pi + [header.index("f")]
    bad = np.flatnonzero(~np.all(np.isfinite(data[:, mandatory]), axis=1)) if len(rows) else []
    if len(bad):
        raise DatasetFormatError(f"row {int(bad[0]) + 1}: non-finite value in a mandatory column")
    if len(rows) == 0:
        raise DatasetFormatError("dataset has no rows")
    return TrainingDataset(
        x=data[:, xi],
        p=data[:, pi] if pi else np.zeros((len(rows), 0)),
        f=data[:, header.index("f")],
        grad=data[:, gi] if gi else None,
        dual=data[:, li] if li else None,
        is_optimal=data[:, opt_i] != 0 if opt_i is not None else None,
    )


# -- histories ------------------------------------------------------------------


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join([str(int(row[0]))] + [repr(float(v)) for v in row[1:]]) + "\n")


def read_history(path) -> list[tuple]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != HISTORY_COLUMNS:
            raise DatasetFormatError(f"unexpected history header {header}")
        return [(int(r[0]), *(float(v) for v in r[1:])) for r in reader]


def write_json(payload: dict, path) -> None:
    Path(path).write_text(json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")


__all__ = [
    "ContractError",
    "DatasetFormatError",
    "FORMAT_VERSION",
    "ModelFileError",
    "load_model",
    "read_dataset",
    "read_history",
    "save_model",
    "write_dataset",
    "write_history",
    "write_json",
]
