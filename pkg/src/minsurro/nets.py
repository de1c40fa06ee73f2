"""Small functional MLP helpers shared by coefficient nets, encoders and heads.

Parameters are plain pytrees (lists of dicts of arrays) so that the whole
surrogate can be flattened into one vector with ``ravel_pytree``.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ._jax import jax, jnp

ACTIVATIONS: dict[str, Callable] = {
    "tanh": jnp.tanh,
    "softplus": jax.nn.softplus,
    "sigmoid": jax.nn.sigmoid,
    "relu": jax.nn.relu,
    "linear": lambda z: z,
}


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    r = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def init_mlp(rng: np.random.Generator, sizes: Sequence[int]) -> list[dict]:
    """Weights ~ U(-r, r) with r = sqrt(6 / (fan_in + fan_out)), biases zero.

    A net without inputs is a vector of free parameters; its bias is drawn
    like a weight row instead, otherwise it would start (and, behind a
    hinge, stay) at exactly zero.
    """
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if fan_in == 0:
            b = glorot_uniform(rng, 1, fan_out)[0]
        else:
            b = np.zeros(fan_out)
        layers.append({"W": glorot_uniform(rng, fan_in, fan_out), "b": b})
    return layers


def apply_mlp(layers: list[dict], z, hidden: str = "softplus", out: str = "linear"):
    act = ACTIVATIONS[hidden]
    last = len(layers) - 1
    for k, layer in enumerate(layers):
        z = z @ layer["W"] + layer["b"]
        z = act(z) if k < last else ACTIVATIONS[out](z)
    return z


def coefficient_sizes(n_in: int, n_out: int, hidden: Sequence[int]) -> list[int]:
    # With no parameter input the net degenerates to a free bias vector.
    if n_in == 0:
        return [0, n_out]
    return [n_in, *hidden, n_out]


def positive(latent):
    """Nonnegative reparameterization used for monotone and ICNN weights."""
    return jax.nn.softplus(latent)
