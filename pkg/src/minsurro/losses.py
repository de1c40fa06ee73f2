"""Composite training loss: data fit plus the two gradient regularizers."""
from __future__ import annotations

import functools

import numpy as np

from ._jax import jax, jnp
from .components import ContractError
from .data import Sample, TrainingDataset
from .model import Architecture, SurrogateModel, contexts, smoothed_from_contexts


def _unique_params(P: np.ndarray):
    if P.shape[1] == 0:
        return np.zeros((1, 0)), np.zeros(P.shape[0], dtype=int)
    uniq, inverse = np.unique(P, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


class CompositeLoss:
    """loss_fit + w1 * optimality term + w2 * gradient-matching term as a function of theta.

    Coefficient/encoder outputs are computed once per distinct parameter
    vector and gathered per row. ``rows`` (optional) restricts the fit and
    gradient-matching terms to a mini-batch; the optimality term always
    covers all of D*.
    """

    def __init__(self, model: SurrogateModel, dataset: TrainingDataset, w1: float = 0.0, w2: float = 0.0):
        if len(dataset) == 0:
            raise ContractError("empty dataset")
        if w1 < 0 or w2 < 0:
            raise ContractError("regularizer weights must be nonnegative")
        self.arch: Architecture = model.arch
        self.unravel = model.unravel()
        self.N = len(dataset)
        P_u, p_idx = _unique_params(dataset.p)
        self.P_u = jnp.asarray(P_u)
        self.p_idx = jnp.asarray(p_idx)
        self.X = jnp.asarray(dataset.x)
        self.F = jnp.asarray(dataset.f)
        grad_rows = dataset.grad_rows()
        G = np.zeros_like(dataset.x)
        gmask = np.zeros(self.N)
        if len(grad_rows):
            G[grad_rows] = dataset.grad[grad_rows]
            gmask[grad_rows] = 1.0
        self.G = jnp.asarray(G)
        self.gmask = jnp.asarray(gmask)
        self.use_r2 = bool(w2 > 0 and len(grad_rows) > 0)
        opt_rows = dataset.optimal_rows()
        self.use_r1 = bool(w1 > 0 and len(opt_rows) > 0)
        if self.use_r1:
            if dataset.constraint_jac is None or len(dataset.constraint_jac) != len(opt_rows):
                raise ContractError("optimality regularizer needs constraint gradients for every optimal row")
            self.O_x = jnp.asarray(dataset.x[opt_rows])
            self.O_pidx = jnp.asarray(p_idx[opt_rows])
            self.O_shift = jnp.asarray(np.einsum("knm,km->kn", dataset.constraint_jac, dataset.dual[opt_rows]))
        self.w1 = float(w1)
        self.w2 = float(w2)
        self._parts = jax.jit(self._parts_impl)
        self._vg = jax.jit(jax.value_and_grad(self._total_impl, has_aux=True))
        self._per_row = jax.jit(self._per_row_impl)

    # -- pure pieces --
    def _row_terms(self, params, ctx_u, rows):
        arch = self.arch
        ctx = jax.tree_util.tree_map(lambda a: a[self.p_idx[rows]], ctx_u)
        X = self.X[rows]
        f_hat = jax.vmap(functools.partial(smoothed_from_contexts, arch, params))(ctx, X)
        fit = (self.F[rows] - f_hat) ** 2
        if self.use_r2:
            gx = jax.vmap(jax.grad(functools.partial(smoothed_from_contexts, arch, params), argnums=1))(ctx, X)
            gm = jnp.sum((gx - self.G[rows]) ** 2, axis=1) * self.gmask[rows]
        else:
            gm = jnp.zeros_like(fit)
        return fit, gm

    def _parts_impl(self, theta, rows):
        arch = self.arch
        params = self.unravel(theta)
        ctx_u = jax.vmap(lambda p: contexts(arch, params, p))(self.P_u)
        fit_rows, gm_rows = self._row_terms(params, ctx_u, rows)
        fit = jnp.mean(fit_rows)
        if self.use_r2:
            reg2 = self.w2 * jnp.sum(gm_rows) / jnp.maximum(jnp.sum(self.gmask[rows]), 1.0)
        else:
            reg2 = jnp.zeros(())
        if self.use_r1:
            ctx = jax.tree_util.tree_map(lambda a: a[self.O_pidx], ctx_u)
            gx = jax.vmap(jax.grad(functools.partial(smoothed_from_contexts, arch, params), argnums=1))(ctx, self.O_x)
            reg1 = self.w1 * jnp.mean(jnp.sum((gx + self.O_shift) ** 2, axis=1))
        else:
            reg1 = jnp.zeros(())
        return fit + reg1 + reg2, fit, reg1, reg2

    def _total_impl(self, theta, rows):
        total, fit, reg1, reg2 = self._parts_impl(theta, rows)
        return total, (fit, reg1, reg2)

    def _per_row_impl(self, theta):
        params = self.unravel(theta)
        ctx_u = jax.vmap(lambda p: contexts(self.arch, params, p))(self.P_u)
        return self._row_terms(params, ctx_u, jnp.arange(self.N))

    # -- public --
    def all_rows(self):
        return jnp.arange(self.N)

    def parts(self, theta, rows=None) -> tuple[float, float, float, float]:
        rows = self.all_rows() if rows is None else jnp.asarray(rows)
        return tuple(float(v) for v in self._parts(jnp.asarray(theta), rows))

    def __call__(self, theta, rows=None):
        rows = self.all_rows() if rows is None else jnp.asarray(rows)
        return self._parts_impl(theta, rows)[0]

    def value_and_grad(self, theta, rows=None):
        rows = self.all_rows() if rows is None else jnp.asarray(rows)
        (value, _aux), grad = self._vg(jnp.asarray(theta), rows)
        return value, grad

    def value_grad_parts(self, theta, rows=None):
        rows = self.all_rows() if rows is None else jnp.asarray(rows)
        (value, aux), grad = self._vg(jnp.asarray(theta), rows)
        return float(value), np.asarray(grad), tuple(float(a) for a in aux)

    def first_nonfinite_sample(self, theta) -> int | None:
        fit, gm = self._per_row(jnp.asarray(theta))
        bad = np.flatnonzero(~(np.isfinite(np.asarray(fit)) & np.isfinite(np.asarray(gm))))
        return int(bad[0]) if bad.size else None


def _as_dataset(batch) -> TrainingDataset:
    if isinstance(batch, TrainingDataset):
        return batch
    batch = list(batch)
    if not batch:
        raise ContractError("empty batch")
    return TrainingDataset.from_samples(batch)


def loss_fit(model: SurrogateModel, batch) -> float:
    """Mean squared error between recorded f and the smoothed surrogate."""
    ds = _as_dataset(batch)
    return CompositeLoss(model, ds).parts(model.theta)[1]


def reg_optimality(model: SurrogateModel, optimal_samples, constraint_grads, w1: float = 1.0) -> float:
    """(w1/M1) sum ||grad_x f_hat + grad_x g * lambda||^2 over D*.

    ``constraint_grads`` has shape (M1, n_x, m).
    """
    samples = list(optimal_samples)
    if not samples:
        return 0.0
    for k, s in enumerate(samples):
        if s.dual is None:
            raise ContractError(f"optimal sample {k} has no dual variables")
    ds = TrainingDataset.from_samples(samples)
    ds.constraint_jac = np.asarray(constraint_grads, dtype=float).reshape(len(samples), ds.n_x, -1)
    if w1 == 0:
        return 0.0
    return CompositeLoss(model, ds, w1=w1).parts(model.theta)[2]


def reg_gradmatch(model: SurrogateModel, grad_samples, w2: float = 1.0) -> float:
    """(w2/M2) sum ||grad_x f_hat - recorded grad||^2."""
    samples = list(grad_samples)
    if not samples:
        return 0.0
    for k, s in enumerate(samples):
        if s.grad is None:
            raise ContractError(f"sample {k} has no recorded gradient")
    if w2 == 0:
        return 0.0
    return CompositeLoss(model, TrainingDataset.from_samples(samples), w2=w2).parts(model.theta)[3]


def loss_total(model: SurrogateModel, dataset: TrainingDataset, w1: float = 0.0, w2: float = 0.0) -> float:
    return CompositeLoss(model, dataset, w1=w1, w2=w2).parts(model.theta)[0]


def predictions(model: SurrogateModel, dataset: TrainingDataset) -> np.ndarray:
    return model.smoothed_batch(dataset.x, dataset.p)


def mse(model: SurrogateModel, dataset: TrainingDataset, exact: bool = False) -> float:
    pred = model.exact_batch(dataset.x, dataset.p) if exact else predictions(model, dataset)
    return float(np.mean((dataset.f - pred) ** 2))


def r2_score(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    sse = float(np.sum((y - np.asarray(y_hat, dtype=float)) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else -np.inf)
