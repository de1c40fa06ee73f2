"""Global solution of the K convex subproblems and the two-stage selection."""
from __future__ import annotations

import functools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from ._jax import jax, jnp
from .components import ContractError, component_context, component_from_context
from .model import Architecture, SurrogateModel, _scaler, scale_p, scale_x
from .region import FeasibleRegion, check_feasibility

OPTIMAL = "Optimal"
ITER_LIMIT = "IterLimit"
INFEASIBLE = "Infeasible"


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 5000
    parallel: bool = True
    max_affine_tol: float = 1e-6


@dataclass
class SubproblemSolution:
    x_opt: np.ndarray | None
    value: float
    iterations: int
    status: str
    kkt_residual: float


@dataclass
class DecompositionResult:
    per_component: list[SubproblemSolution]
    winner: int
    x_star: np.ndarray | None
    value_star: float
    head_values: list[float] = field(default_factory=list)

    @property
    def status(self) -> str:
        return INFEASIBLE if self.winner < 0 else self.per_component[self.winner].status


def worker_count(requested: int | None = None) -> int:
    """Worker threads, capped by MINSURRO_THREADS (0 or unset = no cap)."""
    cap = int(os.environ.get("MINSURRO_THREADS", "0") or 0)
    n = requested if requested else (os.cpu_count() or 1)
    return max(1, min(n, cap) if cap > 0 else n)


def pg_residual(region: FeasibleRegion, x: np.ndarray, g: np.ndarray) -> float:
    """||x - P(x - grad)||_inf, zero exactly at constrained minimizers."""
    return float(np.max(np.abs(x - region.project(x - g)))) if x.size else 0.0


def spg(
    fg: Callable[[np.ndarray], tuple[float, np.ndarray]],
    region: FeasibleRegion,
    x0: np.ndarray,
    tol: float = 1e-8,
    max_iters: int = 5000,
    memory: int = 10,
) -> tuple[np.ndarray, float, int, str, float]:
    """Spectral projected gradient with a nonmonotone Armijo line search.

    Returns (x, f, iterations, status, residual).
    """
    alpha_min, alpha_max = 1e-12, 1e12
    x = region.project(x0)
    f, g = fg(x)
    recent = [f]
    res = pg_residual(region, x, g)
    alpha = 1.0 / max(res, 1e-12)
    alpha = min(max(alpha, alpha_min), alpha_max)
    it = 0
    while res > tol and it < max_iters:
        d = region.project(x - alpha * g) - x
        slope = float(g @ d)
        f_ref = max(recent)
        lam = 1.0
        while True:
            x_new = x + lam * d
            f_new, g_new = fg(x_new)
            if f_new <= f_ref + 1e-4 * lam * slope or lam < 1e-16:
                break
            # safeguarded quadratic interpolation
            lam_q = -0.5 * slope * lam * lam / (f_new - f - lam * slope) if f_new - f - lam * slope > 0 else 0.5 * lam
            lam = min(max(lam_q, 0.1 * lam), 0.5 * lam)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        alpha = alpha_max if sy <= 0 else min(max(float(s @ s) / sy, alpha_min), alpha_max)
        x, f, g = x_new, f_new, g_new
        recent.append(f)
        if len(recent) > memory:
            recent.pop(0)
        res = pg_residual(region, x, g)
        it += 1
        if not np.any(s):
            break
    status = OPTIMAL if res <= tol else ITER_LIMIT
    return x, float(f), it, status, res


@functools.lru_cache(maxsize=None)
def _component_kernels(arch: Architecture, i: int):
    spec = arch.components[i]

    def ctx_fn(params, p):
        return component_context(spec, params["components"][i], scale_p(arch, p), arch.n_x)

    def value(params, ctx, x):
        return component_from_context(spec, params["components"][i], ctx, scale_x(arch, x))

    return jax.jit(ctx_fn), jax.jit(jax.value_and_grad(value, argnums=2))


def _solve_max_affine(model: SurrogateModel, i: int, p, region: FeasibleRegion, tol: float) -> SubproblemSolution:
    """Epigraph LP: min t s.t. a_j'x + b_j <= t, x in region."""
    arch = model.arch
    ctx_fn, _ = _component_kernels(arch, i)
    ctx = ctx_fn(model.params, jnp.asarray(p))
    # pieces act on scaled x = s*x + o
    if arch.x_bounds is not None:
        s, o = _scaler(*arch.x_bounds)
    else:
        s, o = np.ones(arch.n_x), np.zeros(arch.n_x)
    A = np.asarray(ctx["A"]) * s
    b = np.asarray(ctx["b"]) + np.asarray(ctx["A"]) @ o
    n = arch.n_x
    rows_A, rows_b = region.row_matrix()
    A_ub = np.vstack([np.hstack([A, -np.ones((A.shape[0], 1))]), np.hstack([rows_A, np.zeros((len(rows_b), 1))])])
    b_ub = np.concatenate([-b, rows_b])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    bounds = list(zip(region.lower, region.upper)) + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 2:
        return SubproblemSolution(None, np.inf, int(getattr(res, "nit", 0)), INFEASIBLE, np.inf)
    if res.status != 0:
        return SubproblemSolution(None, np.inf, int(getattr(res, "nit", 0)), ITER_LIMIT, np.inf)
    x = np.asarray(res.x[:n])
    value = float(np.max(A @ x + b))
    mu = -np.asarray(res.ineqlin.marginals[: A.shape[0]])
    mu = np.maximum(mu, 0.0)
    mu = mu / mu.sum() if mu.sum() > 0 else mu
    residual = pg_residual(region, x, A.T @ mu)
    status = OPTIMAL if residual <= tol and check_feasibility(region, x, 1e-9) else ITER_LIMIT
    return SubproblemSolution(x, value, int(getattr(res, "nit", 0)), status, residual)


def solve_subproblem(
    model: SurrogateModel,
    i: int,
    p,
    region: FeasibleRegion,
    opts: SolverOptions | None = None,
    x0=None,
) -> SubproblemSolution:
    """Minimize the convex component f_i(., p) over the region to global optimality."""
    opts = opts or SolverOptions()
    if region.n != model.arch.n_x:
        raise ContractError(f"region has dimension {region.n}, model expects {model.arch.n_x}")
    p = np.asarray(p, dtype=float).reshape(model.arch.n_p)
    if not region.is_feasible():
        return SubproblemSolution(None, np.inf, 0, INFEASIBLE, np.inf)
    if model.arch.components[i].family == "max_affine":
        return _solve_max_affine(model, i, p, region, opts.max_affine_tol)
    ctx_fn, vg = _component_kernels(model.arch, i)
    ctx = ctx_fn(model.params, jnp.asarray(p))

    def fg(x):
        v, g = vg(model.params, ctx, jnp.asarray(x))
        return float(v), np.asarray(g)

    start = region.project(region.center if x0 is None else np.asarray(x0, dtype=float))
    x, f, it, status, res = spg(fg, region, start, opts.tol, opts.max_iters)
    return SubproblemSolution(x, f, it, status, res)


def select_winner(model: SurrogateModel, sols: list[SubproblemSolution]) -> tuple[int, list[float]]:
    """Lowest h_i(F_i) among Optimal solutions (IterLimit if none), ties to the lowest index."""
    hv = [model.apply_head(i, s.value) if s.x_opt is not None else np.inf for i, s in enumerate(sols)]
    for allowed in ((OPTIMAL,), (ITER_LIMIT,)):
        cands = [i for i, s in enumerate(sols) if s.status in allowed and s.x_opt is not None]
        if cands:
            return min(cands, key=lambda i: (hv[i], i)), hv
    return -1, hv


def decompose_solve(
    model: SurrogateModel, p, region: FeasibleRegion, opts: SolverOptions | None = None
) -> DecompositionResult:
    """Solve every convex subproblem, apply the heads, pick the winner."""
    opts = opts or SolverOptions()
    K = model.K
    workers = worker_count(K)
    if opts.parallel and K > 1 and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(lambda i: solve_subproblem(model, i, p, region, opts), range(K)))
    else:
        sols = [solve_subproblem(model, i, p, region, opts) for i in range(K)]
    winner, hv = select_winner(model, sols)
    if winner < 0:
        return DecompositionResult(sols, -1, None, np.inf, hv)
    return DecompositionResult(sols, winner, sols[winner].x_opt, float(hv[winner]), hv)
