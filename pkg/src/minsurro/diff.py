"""Exact derivatives of the surrogate and the training losses, plus a
central-difference checker.

Mixed second derivatives (d/dTheta of grad_x) come from nesting reverse-mode
JAX transforms; exactness is what ``gradcheck`` verifies.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ._jax import jax, jnp
from .model import SurrogateModel, compiled, softmin_weights, values


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message: str, sample_index: int | None = None):
        super().__init__(message)
        self.sample_index = sample_index


@dataclass
class GradReport:
    analytic: np.ndarray
    numeric: np.ndarray
    max_rel_err: float
    max_abs_err: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["analytic"] = [float(v) for v in self.analytic]
        d["numeric"] = [float(v) for v in self.numeric]
        return d


def grad_x_smoothed(model: SurrogateModel, x, p) -> np.ndarray:
    """Gradient in x of the smoothed surrogate.

    Kinks: hinge derivative at exactly 0 is 0, max-affine differentiates the
    lowest-index maximizing piece.
    """
    x, p = model._check(x, p)
    return np.asarray(compiled(model.arch)["grad_x"](model.params, x, p))


def smoothing_weights(model: SurrogateModel, x, p) -> np.ndarray:
    """softmax(-F/gamma): the convex-combination weights of the component gradients."""
    x, p = model._check(x, p)
    return np.asarray(softmin_weights(values(model.arch, model.params, x, p), model.gamma))


def component_grads_x(model: SurrogateModel, x, p) -> np.ndarray:
    """Jacobian of the head-transformed component values, shape (K, n_x)."""
    x, p = model._check(x, p)
    return np.asarray(jax.jacobian(lambda xx: values(model.arch, model.params, xx, p))(x))


def grad_theta_loss(loss, theta) -> np.ndarray:
    """Gradient of a scalar loss of theta.

    ``loss`` is any JAX-traceable callable. Objects exposing
    ``value_and_grad`` (the training losses) use their compiled path, and
    ``per_sample`` lets a non-finite loss name the offending sample.
    """
    theta = jnp.asarray(np.asarray(theta, dtype=float))
    if hasattr(loss, "value_and_grad"):
        value, grad = loss.value_and_grad(theta)
    else:
        value, grad = jax.value_and_grad(loss)(theta)
    if not np.isfinite(float(value)):
        index = None
        if hasattr(loss, "first_nonfinite_sample"):
            index = loss.first_nonfinite_sample(theta)
        raise NonFiniteLossError(f"loss is not finite (sample {index})", index)
    return np.asarray(grad)


def central_differences(fn: Callable, point, h: float = 1e-5, coords: Sequence[int] | None = None) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    idx = range(point.size) if coords is None else coords
    out = []
    for i in idx:
        step = np.zeros_like(point)
        step[i] = h
        out.append((float(fn(point + step)) - float(fn(point - step))) / (2 * h))
    return np.array(out)


def gradcheck(
    fn: Callable,
    point,
    h: float = 1e-5,
    grad: Callable | np.ndarray | None = None,
    coords: Sequence[int] | None = None,
) -> GradReport:
    """Compare an analytic gradient against central differences.

    ``grad`` may be a precomputed vector, a callable, or omitted (then
    ``jax.grad(fn)`` is used). ``coords`` restricts the comparison to a
    subset of coordinates.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    point = np.asarray(point, dtype=float)
    if grad is None:
        analytic = np.asarray(jax.grad(lambda z: fn(z))(jnp.asarray(point)))
    elif callable(grad):
        analytic = np.asarray(grad(point), dtype=float)
    else:
        analytic = np.asarray(grad, dtype=float)
    if coords is not None:
        analytic = analytic[np.asarray(coords)]
    numeric = central_differences(fn, point, h, coords)
    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return GradReport(
        analytic=analytic,
        numeric=numeric,
        max_rel_err=float(np.max(abs_err / denom)) if abs_err.size else 0.0,
        max_abs_err=float(np.max(abs_err)) if abs_err.size else 0.0,
    )
