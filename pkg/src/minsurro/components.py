"""Convex component families and monotone heads.

Every family is split into a parameter-only stage (``context``: the
coefficients produced from ``p``) and an ``x`` stage, so batched training can
compute the coefficients once per distinct parameter vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._jax import jax, jnp
from .nets import ACTIVATIONS, apply_mlp, coefficient_sizes, init_mlp, positive

FAMILIES = ("quadratic", "max_affine", "max_squared", "icnn")
HEAD_KINDS = ("identity", "monotone")


class ContractError(ValueError):
    """Raised when an operation is called with arguments that break its contract."""


@dataclass(frozen=True)
class ComponentSpec:
    family: str
    alpha: float = 0.0
    pieces: int = 10
    coef_hidden: tuple[int, ...] = (16,)
    widths: tuple[int, ...] = (5, 5)
    n_q: int = 5
    encoder_hidden: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown component family {self.family!r}")
        if self.family in ("max_affine", "max_squared") and self.pieces < 1:
            raise ContractError("max-type components need at least one piece")
        if self.alpha < 0:
            raise ContractError("alpha must be nonnegative")
        if self.family == "icnn" and len(self.widths) < 1:
            raise ContractError("icnn needs at least one hidden layer")


@dataclass(frozen=True)
class HeadSpec:
    kind: str = "identity"
    hidden: tuple[int, ...] = (5, 3)
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ContractError(f"unknown head kind {self.kind!r}")
        if self.activation not in ("tanh", "softplus", "sigmoid", "relu"):
            raise ContractError(f"head activation must be monotone, got {self.activation!r}")


def encoder_hidden(spec: ComponentSpec, n_p: int) -> tuple[int, ...]:
    if spec.encoder_hidden is not None:
        return spec.encoder_hidden
    width = max(1, int(round((n_p + spec.n_q) / 2)))
    return (width, width)


# -- initialization ---------------------------------------------------------


def init_component(spec: ComponentSpec, n_x: int, n_p: int, rng: np.random.Generator) -> dict:
    h = spec.coef_hidden
    if spec.family == "quadratic":
        return {
            "L": init_mlp(rng, coefficient_sizes(n_p, n_x * (n_x + 1) // 2, h)),
            "c": init_mlp(rng, coefficient_sizes(n_p, n_x, h)),
            "d": init_mlp(rng, coefficient_sizes(n_p, 1, h)),
        }
    if spec.family in ("max_affine", "max_squared"):
        return {
            "A": init_mlp(rng, coefficient_sizes(n_p, spec.pieces * n_x, h)),
            "b": init_mlp(rng, coefficient_sizes(n_p, spec.pieces, h)),
        }
    widths = spec.widths
    enc_h = encoder_hidden(spec, n_p)
    params: dict = {
        "enc": [init_mlp(rng, coefficient_sizes(n_p, spec.n_q, enc_h)) for _ in range(len(widths) + 1)],
        "Wx": [],
        "Wz": [],
        "U": [],
        "b": [],
    }
    prev = None
    for w in widths:
        params["Wx"].append(init_mlp(rng, [n_x, w])[0]["W"])
        params["U"].append(init_mlp(rng, [spec.n_q, w])[0]["W"])
        params["b"].append(np.zeros(w))
        if prev is not None:
            params["Wz"].append(init_mlp(rng, [prev, w])[0]["W"])
        prev = w
    params["Wz_out"] = init_mlp(rng, [prev, 1])[0]["W"][:, 0]
    params["wx_out"] = init_mlp(rng, [n_x, 1])[0]["W"][:, 0]
    params["U_out"] = init_mlp(rng, [spec.n_q, n_x + 1])[0]["W"]
    params["b_out"] = np.zeros(())
    return params


def init_head(spec: HeadSpec, rng: np.random.Generator) -> list[dict] | dict:
    if spec.kind == "identity":
        return {}
    return init_mlp(rng, [1, *spec.hidden, 1])


# -- coefficient stage --------------------------------------------------------


def _tril(vec, n: int):
    rows, cols = np.tril_indices(n)
    return jnp.zeros((n, n), dtype=vec.dtype).at[rows, cols].set(vec)


def component_context(spec: ComponentSpec, params: dict, p, n_x: int):
    """Coefficients of the component as functions of ``p`` only."""
    if spec.family == "quadratic":
        L = _tril(apply_mlp(params["L"], p), n_x)
        c = apply_mlp(params["c"], p)
        d = apply_mlp(params["d"], p)[0]
        return {"L": L, "c": c, "d": d}
    if spec.family in ("max_affine", "max_squared"):
        A = apply_mlp(params["A"], p).reshape(spec.pieces, n_x)
        b = apply_mlp(params["b"], p)
        return {"A": A, "b": b}
    q = [apply_mlp(enc, p, hidden="softplus", out="tanh") for enc in params["enc"]]
    return {"q": q}


# -- x stage -----------------------------------------------------------------


def quadratic_value(alpha, L, c, d, x):
    Lx = L @ x
    return alpha * (x @ x) + Lx @ Lx + c @ x + d


def max_affine_value(A, b, x):
    v = A @ x + b
    # Only the lowest-index maximizing piece carries gradient.
    return v[jnp.argmax(v)]


def max_squared_value(A, b, x):
    return jnp.sum(jax.nn.relu(A @ x - b) ** 2)


def icnn_value(params: dict, q: Sequence, x):
    z = jax.nn.softplus(x @ params["Wx"][0] + q[0] @ params["U"][0] + params["b"][0])
    for k in range(1, len(params["Wx"])):
        pre = z @ positive(params["Wz"][k - 1]) + x @ params["Wx"][k] + q[k] @ params["U"][k] + params["b"][k]
        z = jax.nn.softplus(pre)
    n_x = x.shape[0]
    ctx = q[-1] @ params["U_out"]
    return z @ positive(params["Wz_out"]) + (params["wx_out"] + ctx[:n_x]) @ x + params["b_out"] + ctx[n_x]


def component_from_context(spec: ComponentSpec, params: dict, ctx, x):
    if spec.family == "quadratic":
        return quadratic_value(spec.alpha, ctx["L"], ctx["c"], ctx["d"], x)
    if spec.family == "max_affine":
        return max_affine_value(ctx["A"], ctx["b"], x)
    if spec.family == "max_squared":
        return max_squared_value(ctx["A"], ctx["b"], x)
    return icnn_value(params, ctx["q"], x)


def eval_component(spec: ComponentSpec, params: dict, x, p):
    x = jnp.asarray(x)
    return component_from_context(spec, params, component_context(spec, params, jnp.asarray(p), x.shape[0]), x)


def eval_head(spec: HeadSpec, params, t):
    if spec.kind == "identity":
        return t
    z = jnp.reshape(t, (1,))
    last = len(params) - 1
    for k, layer in enumerate(params):
        z = z @ positive(layer["W"]) + layer["b"]
        if k < last:
            z = ACTIVATIONS[spec.activation](z)
    return z[0]


def effective_icnn_weights(params: dict) -> list:
    """The nonnegative weights actually used on the z-propagating path."""
    return [positive(W) for W in params["Wz"]] + [positive(params["Wz_out"])]


def effective_head_weights(params) -> list:
    return [positive(layer["W"]) for layer in params]
