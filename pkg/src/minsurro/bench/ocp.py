"""Move-blocked single-shooting path-tracking OCP in the Frenet frame.

Decision: u = (v_0, w_0, ..., v_Nb, w_Nb), with u_k = u_Nb for k >= Nb.
Parameter: p = (s, d, theta, dpsi_0, ..., dpsi_Np), where dpsi_k is the
centerline heading at arc distance k * v_ref * dt ahead of s minus the
heading at s. The prediction model recovers curvature from dpsi by a
natural cubic spline, so the reference in the local frame is the same for
every problem and only the heading profile changes.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .._jax import jax, jnp
from ..components import ContractError
from ..qp import QPInfeasible, solve_qp
from ..region import FeasibleRegion
from .lissajous import FrenetState, LissajousPath

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OcpSpec:
    N_p: int = 10
    N_b: int = 4
    dt: float = 0.1
    v_max: float = 1.2
    omega_max: float = np.pi / 3
    half_width: float = 0.3
    v_ref: float = 0.72
    q: tuple = (5.0, 3.0, 0.1)  # first entry is multiplied by the track length
    r: float = 0.01
    q_terminal: tuple = (100.0, 15.0, 0.5)
    length: float = 25.688453055961485
    # smooth floor on 1 - d*kappa inside the prediction model
    denom_floor: float = 0.1
    denom_softness: float = 0.02

    @property
    def n_u(self) -> int:
        return 2 * (self.N_b + 1)

    @property
    def n_p(self) -> int:
        return 3 + self.N_p + 1

    @property
    def spacing(self) -> float:
        """Arc distance between consecutive reference points (m)."""
        return self.v_ref * self.dt

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.q[0] * self.length, self.q[1], self.q[2]])

    @property
    def Q_N(self) -> np.ndarray:
        return np.diag([self.q_terminal[0] * self.length, self.q_terminal[1], self.q_terminal[2]])

    @property
    def input_lower(self) -> np.ndarray:
        return np.tile([0.0, -self.omega_max], self.N_b + 1)

    @property
    def input_upper(self) -> np.ndarray:
        return np.tile([self.v_max, self.omega_max], self.N_b + 1)

    def block_index(self) -> np.ndarray:
        return np.minimum(np.arange(self.N_p), self.N_b)


@dataclass
class OcpParameter:
    x_t: FrenetState
    dpsi_ref: np.ndarray

    def __post_init__(self):
        self.dpsi_ref = np.asarray(self.dpsi_ref, dtype=float).reshape(-1)
        if self.dpsi_ref.size and self.dpsi_ref[0] != 0.0:
            raise ContractError("dpsi_ref[0] must be 0")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x_t.as_array(), self.dpsi_ref])

    @classmethod
    def from_vector(cls, p) -> "OcpParameter":
        p = np.asarray(p, dtype=float)
        return cls(FrenetState.from_array(p[:3]), p[3:])

    @classmethod
    def from_state(cls, state: FrenetState, path: LissajousPath, spec: OcpSpec) -> "OcpParameter":
        return cls(state, path.heading_differences(state.s, spec.N_p, spec.spacing))


def spline_second_derivatives(n: int, h: float) -> np.ndarray:
    """Matrix S with m = S @ y the second derivatives of the natural cubic spline through y."""
    if n < 2:
        return np.zeros((n + 1, n + 1))
    T = np.zeros((n - 1, n - 1))
    D = np.zeros((n - 1, n + 1))
    for i in range(1, n):
        T[i - 1, i - 1] = 4.0
        if i > 1:
            T[i - 1, i - 2] = 1.0
        if i < n - 1:
            T[i - 1, i] = 1.0
        D[i - 1, i - 1 : i + 2] = np.array([1.0, -2.0, 1.0]) * 6.0 / h**2
    S = np.zeros((n + 1, n + 1))
    S[1:n] = np.linalg.solve(T, D)
    return S


def spline_slope(sigma, y, m, h):
    """Derivative of the natural cubic spline through y at knots k*h; linear beyond the ends."""
    n = y.shape[0] - 1
    j = jnp.clip(jnp.floor(sigma / h).astype(jnp.int32), 0, n - 1)
    t = sigma - j * h
    inner = (y[j + 1] - y[j]) / h - h * (2 * m[j] + m[j + 1]) / 6 + m[j] * t + (m[j + 1] - m[j]) * t**2 / (2 * h)
    lo = (y[1] - y[0]) / h - h * (2 * m[0] + m[1]) / 6
    hi = (y[n] - y[n - 1]) / h + h * (m[n - 1] + 2 * m[n]) / 6
    return jnp.where(sigma < 0, lo, jnp.where(sigma > n * h, hi, inner))


def _soft_floor(z, floor, softness):
    return floor + softness * jax.nn.softplus((z - floor) / softness)


def rollout(spec: OcpSpec, S, u, p):
    """Predicted states x_0..x_Np (absolute s, no wrapping) under the blocked inputs."""
    s0 = p[0]
    y = p[3:]
    m = S @ y
    U = u.reshape(spec.N_b + 1, 2)[spec.block_index()]
    L = spec.length

    def step(x, uk):
        kappa = spline_slope((x[0] - s0) * L, y, m, spec.spacing)
        denom = _soft_floor(1.0 - x[1] * kappa, spec.denom_floor, spec.denom_softness)
        sdot = uk[0] * jnp.cos(x[2]) / (L * denom)
        rate = jnp.stack([sdot, uk[0] * jnp.sin(x[2]), uk[1] - kappa * L * sdot])
        nxt = x + spec.dt * rate
        return nxt, nxt

    x0 = p[:3]
    _, xs = jax.lax.scan(step, x0, U)
    return jnp.vstack([x0[None, :], xs]), U


def reference_states(spec: OcpSpec, s0) -> np.ndarray:
    """x_k^ref = (s0 + k v_ref dt / L, 0, 0); fixed in the local frame up to the s0 offset."""
    k = np.arange(spec.N_p + 1)
    return np.stack([s0 + k * spec.spacing / spec.length, np.zeros_like(k, float), np.zeros_like(k, float)], axis=1)


def objective(spec: OcpSpec, S, u, p):
    X, U = rollout(spec, S, u, p)
    k = jnp.arange(spec.N_p + 1)
    ref_s = p[0] + k * spec.spacing / spec.length
    E = X - jnp.stack([ref_s, jnp.zeros_like(ref_s), jnp.zeros_like(ref_s)], axis=1)
    Q = jnp.asarray(np.diag(spec.Q))
    QN = jnp.asarray(np.diag(spec.Q_N))
    stage = jnp.sum(E[:-1] ** 2 * Q) + spec.r * jnp.sum(U**2)
    return stage + jnp.sum(E[-1] ** 2 * QN)


class OcpProblem:
    """Compiled objective, gradient and Hessian plus the constraint builder."""

    def __init__(self, spec: OcpSpec | None = None):
        self.spec = spec or OcpSpec()
        S = jnp.asarray(spline_second_derivatives(self.spec.N_p, self.spec.spacing))
        f = functools.partial(objective, self.spec, S)
        self._f = jax.jit(f)
        self._vg = jax.jit(jax.value_and_grad(f))
        self._hess = jax.jit(jax.hessian(f))
        self._rollout = jax.jit(functools.partial(rollout, self.spec, S))
        self._batch_vg = jax.jit(jax.vmap(jax.value_and_grad(f), in_axes=(0, None)))

    @property
    def n_u(self) -> int:
        return self.spec.n_u

    def value(self, u, p) -> float:
        return float(self._f(jnp.asarray(u, dtype=float), jnp.asarray(p, dtype=float)))

    def value_and_grad(self, u, p) -> tuple[float, np.ndarray]:
        v, g = self._vg(jnp.asarray(u, dtype=float), jnp.asarray(p, dtype=float))
        return float(v), np.asarray(g)

    def hessian(self, u, p) -> np.ndarray:
        return np.asarray(self._hess(jnp.asarray(u, dtype=float), jnp.asarray(p, dtype=float)))

    def batch_value_and_grad(self, U, p) -> tuple[np.ndarray, np.ndarray]:
        v, g = self._batch_vg(jnp.asarray(U, dtype=float), jnp.asarray(p, dtype=float))
        return np.asarray(v), np.asarray(g)

    def predicted_states(self, u, p) -> np.ndarray:
        return np.asarray(self._rollout(jnp.asarray(u, dtype=float), jnp.asarray(p, dtype=float))[0])

    def region(self, p) -> FeasibleRegion:
        return ocp_constraints(p, self.spec)

    def constraint_jacobian(self, p) -> np.ndarray:
        C, _ = self.region(p).all_rows()
        return C.T


def ocp_objective(u, p, spec: OcpSpec | None = None) -> float:
    return _problem(spec or OcpSpec()).value(u, p)


@functools.lru_cache(maxsize=8)
def _problem(spec: OcpSpec) -> OcpProblem:
    return OcpProblem(spec)


def ocp_constraints(p, spec: OcpSpec | None = None) -> FeasibleRegion:
    """Input box for every blocked input plus |d_1| <= half_width on the first step.

    d_1 = d + dt * sin(theta) * v_0 is affine in u. When the current state
    already violates the bound so that no v_0 can satisfy a row, the row's
    right-hand side is relaxed to the best achievable value, which keeps the
    region nonempty (the row then pushes toward the centerline).
    """
    spec = spec or OcpSpec()
    p = np.asarray(p, dtype=float)
    d, theta = float(p[1]), float(p[2])
    c = spec.dt * np.sin(theta)
    rows = []
    for sign in (1.0, -1.0):
        a = np.zeros(spec.n_u)
        a[0] = sign * c
        b = spec.half_width - sign * d
        best = min(0.0, sign * c * spec.v_max)  # min of a'u over v_0 in [0, v_max]
        rows.append((a, max(b, best)))
    return FeasibleRegion(spec.input_lower, spec.input_upper, rows)


# -- duals, residuals, SQP --------------------------------------------------------


def estimate_duals(grad, C, e, u, active_tol: float = 1e-6) -> np.ndarray:
    """Nonnegative least-squares fit of grad + C_A' lam_A = 0 over rows active within tol."""
    lam = np.zeros(C.shape[0])
    active = np.flatnonzero(C @ u - e >= -active_tol)
    if active.size:
        lam[active], _ = nnls(C[active].T, -np.asarray(grad))
    return lam


def stationarity_residual(u, lam, p, problem: OcpProblem | None = None) -> float:
    """||grad f(u, p) + grad g(u, p) lam|| with box rows counted as affine rows."""
    problem = problem or _problem(OcpSpec())
    lam = np.asarray(lam, dtype=float)
    C, _ = problem.region(p).all_rows()
    if lam.shape != (C.shape[0],):
        raise ContractError(f"dual vector has length {lam.size}, expected {C.shape[0]}")
    if np.any(lam < 0):
        raise ContractError("dual variables must be nonnegative")
    _, g = problem.value_and_grad(u, p)
    return float(np.linalg.norm(g + C.T @ lam))


def _residual_at(problem: OcpProblem, u, p, C, e):
    f, g = problem.value_and_grad(u, p)
    lam = estimate_duals(g, C, e, u)
    return f, g, lam, float(np.linalg.norm(g + C.T @ lam))


@dataclass
class SqpResult:
    u: np.ndarray
    lam: np.ndarray
    iterations: int
    residual_history: list[float]
    f: float
    grad: np.ndarray

    @property
    def residual(self) -> float:
        return self.residual_history[-1]


def convexified_hessian(H: np.ndarray, rel_floor: float = 1e-6) -> np.ndarray:
    """Symmetric eigenvalue clipping to a positive floor."""
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, rel_floor * max(1.0, float(np.max(np.abs(w)))))
    return (V * w) @ V.T


def pinned_coordinates(u, g, C, e, tol: float = 1e-9) -> np.ndarray:
    """Coordinates held by an active single-variable row that the gradient pushes against."""
    pinned = np.zeros(u.size, dtype=bool)
    slack = e - C @ u
    for row, sl in zip(C, slack):
        nz = np.flatnonzero(row)
        if sl <= tol and nz.size == 1:
            j = nz[0]
            if -g[j] * np.sign(row[j]) > 0:
                pinned[j] = True
    return pinned


def model_hessian(H: np.ndarray, pinned: np.ndarray) -> np.ndarray:
    """Positive definite model: the free and pinned blocks are clipped separately.

    Clipping the whole matrix would bend the Newton step on the free
    coordinates whenever the full Hessian is indefinite but its reduced
    block is not, which is the typical situation at a constrained minimum.
    """
    H = 0.5 * (H + H.T)
    out = np.zeros_like(H)
    for block in (~pinned, pinned):
        idx = np.flatnonzero(block)
        if idx.size:
            out[np.ix_(idx, idx)] = convexified_hessian(H[np.ix_(idx, idx)])
    return out


def sqp_refine(
    problem: OcpProblem, u_init, p, max_iters: int = 100, tol: float = 1e-6
) -> SqpResult:
    """Line-search SQP with the exact Hessian made positive definite blockwise.

    The constraints are affine, so every QP step keeps the iterate feasible
    and the Armijo search runs on the objective alone; the returned iterate
    is therefore the best one seen in objective value.
    """
    region = problem.region(p)
    C, e = region.all_rows()
    u = np.asarray(u_init, dtype=float)
    if not region.contains(u, 1e-12):
        u = region.project(u)
    f, g, lam, res = _residual_at(problem, u, p, C, e)
    history = [res]
    it = 0
    while res > tol and it < max_iters:
        H = model_hessian(problem.hessian(u, p), pinned_coordinates(u, g, C, e))
        try:
            d = solve_qp(H, g, C, e - C @ u)
        except (QPInfeasible, np.linalg.LinAlgError):
            break
        slope = float(g @ d)
        if not slope < 0:
            break
        t = 1.0
        while t > 1e-12:
            f_new = problem.value(u + t * d, p)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                break
            # near a solution the decrease drops below rounding; take the full step
            if t == 1.0 and np.isfinite(f_new) and f_new <= f + 1e-14 * max(1.0, abs(f)):
                break
            t *= 0.5
        else:
            break
        u = u + t * d
        # the step keeps feasibility up to rounding
        u = np.clip(u, region.lower, region.upper)
        f, g, lam, res = _residual_at(problem, u, p, C, e)
        history.append(res)
        it += 1
    return SqpResult(u, lam, it, history, f, g)


class OcpSolveError(RuntimeError):
    pass


@dataclass
class ReferenceSolution:
    u: np.ndarray
    lam: np.ndarray
    f: float
    grad: np.ndarray
    residual: float
    iterations: int


def reference_guess(problem: OcpProblem, p) -> np.ndarray:
    """Reference speed with the heading rate the centerline asks for."""
    spec = problem.spec
    dpsi = np.asarray(p, dtype=float)[3:]
    rate = np.diff(dpsi)[: spec.N_b + 1] / spec.dt
    u = np.stack([np.full(spec.N_b + 1, spec.v_ref), rate], axis=1).ravel()
    return np.clip(u, spec.input_lower, spec.input_upper)


def solve_ocp_reference(
    problem: OcpProblem, p, warm=None, tol: float = 1e-8, max_iters: int = 200, accept: float = 1e-4
) -> ReferenceSolution:
    """Multistart SQP to full convergence; the lowest objective among converged runs wins."""
    spec = problem.spec
    starts = [reference_guess(problem, p), np.zeros(spec.n_u), 0.5 * (spec.input_lower + spec.input_upper)]
    if warm is not None:
        starts.insert(0, np.asarray(warm, dtype=float))
    best = None
    for u0 in starts:
        r = sqp_refine(problem, u0, p, max_iters=max_iters, tol=tol)
        if r.residual > accept:
            continue
        if best is None or r.f < best.f - 1e-12:
            best = r
    if best is None:
        raise OcpSolveError("no start converged")
    return ReferenceSolution(best.u, best.lam, best.f, best.grad, best.residual, best.iterations)


def shifted_guess(u_prev, spec: OcpSpec) -> np.ndarray:
    """Advance the blocked sequence one step and repeat the last input."""
    U = np.asarray(u_prev, dtype=float).reshape(spec.N_b + 1, 2)
    return np.vstack([U[1:], U[-1:]]).ravel()
