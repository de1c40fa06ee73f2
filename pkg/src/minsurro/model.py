"""The surrogate: pointwise minimum of K monotone-of-convex components."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from jax.flatten_util import ravel_pytree

from ._jax import jax, jnp
from .components import (
    ComponentSpec,
    ContractError,
    HeadSpec,
    component_context,
    component_from_context,
    eval_head,
    init_component,
    init_head,
)


def _scaler(lower, upper):
    """Affine map of a box onto [-1, 1]; degenerate coordinates map to 0."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    width = hi - lo
    scale = np.where(width > 0, 2.0 / np.where(width > 0, width, 1.0), 0.0)
    offset = np.where(width > 0, -1.0 - lo * scale, 0.0)
    return scale, offset


@dataclass(frozen=True)
class Architecture:
    """Static structure of a surrogate; hashable so it can key jit caches."""

    n_x: int
    n_p: int
    components: tuple[ComponentSpec, ...]
    heads: tuple[HeadSpec, ...]
    shared_head: bool = False
    gamma: float = 0.1
    x_bounds: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    p_bounds: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        K = len(self.components)
        if K < 1:
            raise ContractError("a surrogate needs K >= 1 components")
        if not self.gamma > 0:
            raise ContractError("gamma must be positive")
        expected = 1 if self.shared_head else K
        if len(self.heads) != expected:
            raise ContractError(f"expected {expected} head spec(s), got {len(self.heads)}")
        for name, bounds, n in (("x_bounds", self.x_bounds, self.n_x), ("p_bounds", self.p_bounds, self.n_p)):
            if bounds is not None and (len(bounds[0]) != n or len(bounds[1]) != n):
                raise ContractError(f"{name} must have length {n}")

    @property
    def K(self) -> int:
        return len(self.components)

    def head_spec(self, i: int) -> HeadSpec:
        return self.heads[0] if self.shared_head else self.heads[i]

    def with_gamma(self, gamma: float) -> "Architecture":
        return replace(self, gamma=float(gamma))


def make_architecture(
    n_x: int,
    n_p: int,
    components: Sequence[ComponentSpec] | ComponentSpec,
    K: int | None = None,
    head: HeadSpec | Sequence[HeadSpec] | None = None,
    shared_head: bool = False,
    gamma: float = 0.1,
    x_bounds=None,
    p_bounds=None,
) -> Architecture:
    if isinstance(components, ComponentSpec):
        components = (components,) * (K or 1)
    components = tuple(components)
    head = head if head is not None else HeadSpec()
    if isinstance(head, HeadSpec):
        heads = (head,) if shared_head else (head,) * len(components)
    else:
        heads = tuple(head)

    def _b(b):
        return None if b is None else (tuple(float(v) for v in b[0]), tuple(float(v) for v in b[1]))

    return Architecture(n_x, n_p, components, heads, shared_head, float(gamma), _b(x_bounds), _b(p_bounds))


def init_params(arch: Architecture, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    comps = [init_component(spec, arch.n_x, arch.n_p, rng) for spec in arch.components]
    heads = [init_head(spec, rng) for spec in arch.heads]
    return jax.tree_util.tree_map(jnp.asarray, {"components": comps, "heads": heads})


# -- pure evaluation (arch is static) -------------------------------------------


def scale_x(arch: Architecture, x):
    if arch.x_bounds is None:
        return x
    s, o = _scaler(*arch.x_bounds)
    return x * s + o


def scale_p(arch: Architecture, p):
    if arch.p_bounds is None:
        return p
    s, o = _scaler(*arch.p_bounds)
    return p * s + o


def contexts(arch: Architecture, params, p):
    ps = scale_p(arch, p)
    return [
        component_context(spec, cp, ps, arch.n_x) for spec, cp in zip(arch.components, params["components"])
    ]


def convex_values_from_contexts(arch: Architecture, params, ctxs, x):
    xs = scale_x(arch, x)
    return jnp.stack(
        [
            component_from_context(spec, cp, ctx, xs)
            for spec, cp, ctx in zip(arch.components, params["components"], ctxs)
        ]
    )


def apply_heads(arch: Architecture, params, raw):
    out = []
    for i in range(arch.K):
        hp = params["heads"][0 if arch.shared_head else i]
        out.append(eval_head(arch.head_spec(i), hp, raw[i]))
    return jnp.stack(out)


def values_from_contexts(arch: Architecture, params, ctxs, x):
    return apply_heads(arch, params, convex_values_from_contexts(arch, params, ctxs, x))


def values(arch: Architecture, params, x, p):
    """Head-transformed component values h_i(f_i(x, p)), shape (K,)."""
    return values_from_contexts(arch, params, contexts(arch, params, p), x)


def softmin(z, gamma):
    """-gamma * log(sum(exp(-z / gamma))), shifted by min(z) for overflow safety."""
    m = jnp.min(z)
    return m - gamma * jnp.log(jnp.sum(jnp.exp(-(z - m) / gamma)))


def softmin_weights(z, gamma):
    """Gradient weights of ``softmin``: softmax(-z / gamma)."""
    return jax.nn.softmax(-z / gamma)


def smoothed_from_contexts(arch: Architecture, params, ctxs, x):
    return softmin(values_from_contexts(arch, params, ctxs, x), arch.gamma)


def smoothed(arch: Architecture, params, x, p):
    return softmin(values(arch, params, x, p), arch.gamma)


@functools.lru_cache(maxsize=None)
def compiled(arch: Architecture):
    """Jitted single-point evaluators for one architecture."""

    def _grad_x(params, x, p):
        return jax.grad(smoothed, argnums=2)(arch, params, x, p)

    return {
        "values": jax.jit(functools.partial(values, arch)),
        "raw": jax.jit(lambda params, x, p: convex_values_from_contexts(arch, params, contexts(arch, params, p), x)),
        "smoothed": jax.jit(functools.partial(smoothed, arch)),
        "grad_x": jax.jit(_grad_x),
        "batch_smoothed": jax.jit(jax.vmap(functools.partial(smoothed, arch), in_axes=(None, 0, 0))),
        "batch_values": jax.jit(jax.vmap(functools.partial(values, arch), in_axes=(None, 0, 0))),
    }


# -- model object ---------------------------------------------------------------


@dataclass
class SurrogateModel:
    """Architecture plus parameters.

    Evaluation methods are pure and may be called from many threads; updating
    ``params`` (directly or through ``set_theta``) needs exclusive access.
    """

    arch: Architecture
    params: dict
    metadata: dict = field(default_factory=dict)

    @classmethod
    def create(cls, arch: Architecture, seed: int = 0) -> "SurrogateModel":
        return cls(arch, init_params(arch, seed))

    @property
    def K(self) -> int:
        return self.arch.K

    @property
    def gamma(self) -> float:
        return self.arch.gamma

    # theta <-> params
    @property
    def theta(self) -> np.ndarray:
        flat, _ = ravel_pytree(self.params)
        return np.asarray(flat, dtype=float)

    def unravel(self):
        return ravel_pytree(self.params)[1]

    def set_theta(self, theta) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise ContractError(f"theta has length {theta.size}, expected {self.n_theta}")
        self.params = self.unravel()(jnp.asarray(theta))

    def with_theta(self, theta) -> "SurrogateModel":
        out = SurrogateModel(self.arch, self.params, dict(self.metadata))
        out.set_theta(theta)
        return out

    @property
    def n_theta(self) -> int:
        return int(sum(np.size(leaf) for leaf in jax.tree_util.tree_leaves(self.params)))

    def theta_index(self) -> dict[str, slice]:
        """Map from each parameter array (by tree path) to its slice of theta."""
        out = {}
        start = 0
        for path, leaf in jax.tree_util.tree_flatten_with_path(self.params)[0]:
            n = int(np.size(leaf))
            out[jax.tree_util.keystr(path)] = slice(start, start + n)
            start += n
        return out

    # evaluation
    def _check(self, x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float).reshape(-1)
        if x.shape != (self.arch.n_x,):
            raise ContractError(f"x has shape {x.shape}, expected ({self.arch.n_x},)")
        if p.shape != (self.arch.n_p,):
            raise ContractError(f"p has shape {p.shape}, expected ({self.arch.n_p},)")
        return jnp.asarray(x), jnp.asarray(p)

    def component_values(self, x, p) -> np.ndarray:
        """Raw convex values f_i(x, p) before the heads."""
        x, p = self._check(x, p)
        return np.asarray(compiled(self.arch)["raw"](self.params, x, p))

    def head_values(self, x, p) -> np.ndarray:
        x, p = self._check(x, p)
        return np.asarray(compiled(self.arch)["values"](self.params, x, p))

    def apply_head(self, i: int, t: float) -> float:
        hp = self.params["heads"][0 if self.arch.shared_head else i]
        return float(eval_head(self.arch.head_spec(i), hp, jnp.asarray(float(t))))

    def exact(self, x, p) -> tuple[float, int]:
        """min_i h_i(f_i(x, p)) and the lowest minimizing index."""
        v = self.head_values(x, p)
        i = int(np.argmin(v))
        return float(v[i]), i

    def smoothed(self, x, p) -> float:
        x, p = self._check(x, p)
        return float(compiled(self.arch)["smoothed"](self.params, x, p))

    def smoothed_batch(self, X, P) -> np.ndarray:
        X = jnp.asarray(np.asarray(X, dtype=float).reshape(-1, self.arch.n_x))
        P = jnp.asarray(np.asarray(P, dtype=float).reshape(X.shape[0], self.arch.n_p))
        return np.asarray(compiled(self.arch)["batch_smoothed"](self.params, X, P))

    def exact_batch(self, X, P) -> np.ndarray:
        X = jnp.asarray(np.asarray(X, dtype=float).reshape(-1, self.arch.n_x))
        P = jnp.asarray(np.asarray(P, dtype=float).reshape(X.shape[0], self.arch.n_p))
        return np.asarray(compiled(self.arch)["batch_values"](self.params, X, P)).min(axis=1)


def lse_gap_bound(gamma: float, K: int) -> float:
    return gamma * math.log(K)
