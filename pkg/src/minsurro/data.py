"""Training records and the projected-sampling dataset builders."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .components import ContractError
from .region import FeasibleRegion


@dataclass
class Sample:
    x: np.ndarray
    p: np.ndarray
    f: float
    grad: np.ndarray | None = None
    dual: np.ndarray | None = None
    is_optimal: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.p = np.asarray(self.p, dtype=float).reshape(-1)
        self.f = float(self.f)
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=float).reshape(-1)
            if not np.all(np.isfinite(self.grad)):
                raise ContractError("recorded gradient must be finite")
        if self.dual is not None:
            self.dual = np.asarray(self.dual, dtype=float).reshape(-1)
            if not self.is_optimal:
                raise ContractError("dual variables are only recorded at optimal points")
            if np.any(self.dual < 0):
                raise ContractError("dual variables must be nonnegative")


@dataclass
class TrainingDataset:
    """Column-oriented records.

    Optional groups (``grad``, ``dual``) are whole arrays or ``None``; a row
    without a value in a present group holds NaN there. ``constraint_jac``
    stacks grad_x g at the optimal rows, shape (M1, n_x, m), supplied by the
    problem that generated the data.
    """

    x: np.ndarray
    p: np.ndarray
    f: np.ndarray
    grad: np.ndarray | None = None
    dual: np.ndarray | None = None
    is_optimal: np.ndarray | None = None
    constraint_jac: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        N = self.f.size
        self.x = self.x.reshape(N, -1)
        self.p = np.asarray(self.p, dtype=float).reshape(N, -1)
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=float).reshape(N, self.n_x)
        if self.dual is not None:
            self.dual = np.asarray(self.dual, dtype=float).reshape(N, -1)
        if self.is_optimal is None:
            self.is_optimal = np.zeros(N, dtype=bool)
        self.is_optimal = np.asarray(self.is_optimal, dtype=bool).reshape(N)
        if self.dual is not None:
            has = np.all(np.isfinite(self.dual), axis=1)
            if np.any(has & ~self.is_optimal):
                raise ContractError("dual present on a row not flagged optimal")
            if np.any(self.dual[has] < 0):
                raise ContractError("dual variables must be nonnegative")

    def __len__(self) -> int:
        return self.f.size

    @property
    def n_x(self) -> int:
        return self.x.shape[1]

    @property
    def n_p(self) -> int:
        return self.p.shape[1]

    @property
    def m(self) -> int:
        return 0 if self.dual is None else self.dual.shape[1]

    def grad_rows(self) -> np.ndarray:
        if self.grad is None:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(np.all(np.isfinite(self.grad), axis=1))

    def optimal_rows(self) -> np.ndarray:
        """Rows of D*: flagged optimal and carrying dual variables."""
        if self.dual is None:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(self.is_optimal & np.all(np.isfinite(self.dual), axis=1))

    def attach_constraints(self, jacobian: Callable[[np.ndarray], np.ndarray]) -> "TrainingDataset":
        rows = self.optimal_rows()
        self.constraint_jac = np.array([jacobian(self.p[i]) for i in rows]).reshape(len(rows), self.n_x, -1)
        return self

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "TrainingDataset":
        if not samples:
            raise ContractError("no samples")
        n_x = samples[0].x.size
        x = np.array([s.x for s in samples])
        p = np.array([s.p for s in samples]).reshape(len(samples), -1)
        f = np.array([s.f for s in samples])
        grad = None
        if any(s.grad is not None for s in samples):
            grad = np.array([s.grad if s.grad is not None else np.full(n_x, np.nan) for s in samples])
        dual = None
        if any(s.dual is not None for s in samples):
            m = next(s.dual.size for s in samples if s.dual is not None)
            dual = np.array([s.dual if s.dual is not None else np.full(m, np.nan) for s in samples])
        opt = np.array([s.is_optimal for s in samples])
        return cls(x, p, f, grad, dual, opt)

    def samples(self) -> list[Sample]:
        out = []
        for k in range(len(self)):
            g = None if self.grad is None or not np.all(np.isfinite(self.grad[k])) else self.grad[k]
            d = None if self.dual is None or not np.all(np.isfinite(self.dual[k])) else self.dual[k]
            out.append(Sample(self.x[k], self.p[k], self.f[k], g, d, bool(self.is_optimal[k])))
        return out

    def subset(self, rows) -> "TrainingDataset":
        rows = np.asarray(rows, dtype=int)
        out = TrainingDataset(
            self.x[rows],
            self.p[rows],
            self.f[rows],
            None if self.grad is None else self.grad[rows],
            None if self.dual is None else self.dual[rows],
            self.is_optimal[rows],
        )
        if self.constraint_jac is not None:
            # constraint_jac follows optimal_rows(); keep the entries of retained rows
            pos = {int(r): k for k, r in enumerate(self.optimal_rows())}
            keep = [pos[int(r)] for r in rows if int(r) in pos]
            out.constraint_jac = self.constraint_jac[keep].reshape(len(keep), self.n_x, -1)
        return out


def concat_datasets(parts: Iterable[TrainingDataset]) -> TrainingDataset:
    parts = list(parts)
    if not parts:
        raise ContractError("nothing to concatenate")
    N = [len(d) for d in parts]
    n_x = parts[0].n_x

    def group(name, width):
        if all(getattr(d, name) is None for d in parts):
            return None
        return np.vstack(
            [getattr(d, name) if getattr(d, name) is not None else np.full((n, width), np.nan) for d, n in zip(parts, N)]
        )

    m = max(d.m for d in parts)
    jacs = [d.constraint_jac for d in parts if d.constraint_jac is not None and len(d.constraint_jac)]
    out = TrainingDataset(
        np.vstack([d.x for d in parts]),
        np.vstack([d.p for d in parts]),
        np.concatenate([d.f for d in parts]),
        group("grad", n_x),
        group("dual", m) if m else None,
        np.concatenate([d.is_optimal for d in parts]),
    )
    if jacs:
        out.constraint_jac = np.concatenate(jacs)
    return out


# -- sampling -------------------------------------------------------------------


def project_onto_region(region: FeasibleRegion, x) -> np.ndarray:
    """Nearest point of the box (elementwise clamp); identity inside."""
    return region.box_project(x)


def projected_sample(
    domain: FeasibleRegion, enlargement, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform draws from the box enlarged by ``enlargement`` per side, clamped back.

    Only the box is enforced; affine rows of the region are ignored on purpose.
    """
    delta = np.broadcast_to(np.asarray(enlargement, dtype=float), domain.lower.shape)
    if np.any(delta < 0):
        raise ContractError("enlargement must be nonnegative")
    raw = rng.uniform(domain.lower - delta, domain.upper + delta, size=(int(count), domain.n))
    return np.clip(raw, domain.lower, domain.upper)


def sample_parameters(
    mode: str,
    count: int,
    rng: np.random.Generator | None = None,
    box: FeasibleRegion | None = None,
    inherited: Sequence | None = None,
) -> np.ndarray:
    """Parameter vectors: i.i.d. uniform over a box, or recorded ones cycled."""
    if mode == "uniform":
        if box is None or rng is None:
            raise ContractError("uniform parameter sampling needs a box and an rng")
        return rng.uniform(box.lower, box.upper, size=(int(count), box.n))
    if mode == "inherited":
        if inherited is None or len(inherited) == 0:
            raise ContractError("inherited parameter list is empty")
        src = np.asarray(inherited, dtype=float)
        src = src.reshape(len(src), -1)
        return src[np.arange(int(count)) % len(src)]
    raise ContractError(f"unknown parameter sampling mode {mode!r}")
