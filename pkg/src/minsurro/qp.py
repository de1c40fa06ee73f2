"""Dense strictly convex QP via least-distance programming.

    minimize  0.5 d'Hd + g'd   subject to  C d <= e

With H = R R' the substitution z = R'd + R^{-1} g turns the problem into
min ||z|| s.t. G z >= h, which the Lawson-Hanson reduction solves with one
nonnegative least-squares call. Exact (finite) for the small problems used
here: projections onto polyhedra and SQP steps.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import nnls


class QPInfeasible(RuntimeError):
    pass


def solve_qp(H: np.ndarray, g: np.ndarray, C: np.ndarray, e: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    C = np.asarray(C, dtype=float).reshape(-1, n)
    e = np.asarray(e, dtype=float).reshape(-1)
    factor = cho_factor(H, lower=True)
    R = np.tril(factor[0])
    x_free = -cho_solve(factor, g)
    if C.shape[0] == 0 or np.all(C @ x_free <= e):
        return x_free
    # G = -C R^{-T}, h = -(e + C H^{-1} g) = -(e - C x_free)
    CRt = solve_triangular(R, C.T, lower=True).T
    G = -CRt
    h = -(e - C @ x_free)
    # Lawson-Hanson: nnls on [G'; h'] y = [0; 1]
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    y, _ = nnls(E, f, maxiter=50 * (n + C.shape[0]))
    r = E @ y - f
    if np.linalg.norm(r) < 1e-12 or r[-1] >= -1e-14:
        raise QPInfeasible("constraint set is empty")
    z = -r[:n] / r[-1]
    # d = R^{-T}(z - R^{-1} g) = R^{-T} z + x_free
    d = solve_triangular(R.T, z, lower=False) + x_free
    return _polish(H, g, C, e, d)


def _polish(H, g, C, e, d, tol: float = 1e-6, max_rounds: int = 50):
    """Refine the NNLS point by an active-set loop on exact KKT solves.

    NNLS is accurate to roughly 1e-9 here. Starting from the rows it left
    (nearly) active, the loop drops the most negative multiplier or adds the
    most violated row until the KKT conditions hold; if it does not settle,
    the NNLS point is returned unchanged.
    """
    n = d.size
    scale = 1.0 + np.abs(e)
    active = list(np.flatnonzero(C @ d - e >= -tol * scale))
    for _ in range(max_rounds):
        A = C[active]
        K = np.block([[H, A.T], [A, np.zeros((len(active), len(active)))]])
        sol = np.linalg.lstsq(K, np.concatenate([-g, e[active]]), rcond=None)[0]
        if not np.all(np.isfinite(sol)):
            return d
        d_new, mu = sol[:n], sol[n:]
        if mu.size and mu.min() < -1e-12:
            active.pop(int(np.argmin(mu)))
            continue
        viol = C @ d_new - e
        viol[active] = -np.inf
        if viol.size and viol.max() > 1e-12 * scale[int(np.argmax(viol))]:
            active.append(int(np.argmax(viol)))
            continue
        return d_new
    return d


def project_polyhedron(x: np.ndarray, lower: np.ndarray, upper: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {lower <= y <= upper, A y <= b}."""
    n = x.size
    C = np.vstack([-np.eye(n), np.eye(n), np.asarray(A, dtype=float).reshape(-1, n)])
    e = np.concatenate([-lower, upper, np.asarray(b, dtype=float).reshape(-1)])
    # min 0.5||d||^2 s.t. C(x + d) <= e
    d = solve_qp(np.eye(n), np.zeros(n), C, e - C @ x)
    return x + d
