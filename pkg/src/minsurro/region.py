"""Feasible regions: a box plus finitely many affine rows a'x <= b."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .components import ContractError
from .qp import QPInfeasible, project_polyhedron


@dataclass
class FeasibleRegion:
    lower: np.ndarray
    upper: np.ndarray
    affine_rows: list[tuple[np.ndarray, float]] = field(default_factory=list)

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.shape != self.upper.shape:
            raise ContractError("lower and upper bounds differ in length")
        if np.any(self.lower > self.upper):
            raise ContractError("region requires lower <= upper")
        rows = []
        for a, b in self.affine_rows:
            a = np.asarray(a, dtype=float).reshape(-1)
            if a.size != self.n:
                raise ContractError(f"affine row has length {a.size}, expected {self.n}")
            rows.append((a, float(b)))
        self.affine_rows = rows

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def is_box(self) -> bool:
        return not self.affine_rows

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def row_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.affine_rows:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.array([a for a, _ in self.affine_rows]), np.array([b for _, b in self.affine_rows])

    def all_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Every constraint as C x <= e.

        Order: n lower-bound rows (-x_j <= -lower_j), n upper-bound rows
        (x_j <= upper_j), then the affine rows.
        """
        A, b = self.row_matrix()
        eye = np.eye(self.n)
        return np.vstack([-eye, eye, A]), np.concatenate([-self.lower, self.upper, b])

    @property
    def m(self) -> int:
        return 2 * self.n + len(self.affine_rows)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return check_feasibility(self, x, tol)

    def box_project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def is_feasible(self) -> bool:
        """Feasibility pre-pass: box nonempty and the rows consistent with it."""
        if self.is_box:
            return True
        A, b = self.row_matrix()
        res = linprog(
            np.zeros(self.n), A_ub=A, b_ub=b, bounds=list(zip(self.lower, self.upper)), method="highs"
        )
        return res.status == 0

    def project(self, x, tol: float = 1e-13, max_cycles: int = 10_000) -> np.ndarray:
        """Euclidean projection onto the region.

        Box-only regions clamp. Otherwise Dykstra's alternating projection
        runs over the box and each halfspace; if its change plateaus for 100
        cycles without reaching ``tol`` the exact QP projection takes over.
        """
        x = np.asarray(x, dtype=float)
        if self.is_box:
            return self.box_project(x)
        A, b = self.row_matrix()
        norms2 = np.einsum("ij,ij->i", A, A)
        y = x.copy()
        incr = np.zeros((len(b) + 1, self.n))
        best = np.inf
        since_best = 0
        for _ in range(max_cycles):
            y_prev = y.copy()
            incr_prev = incr.copy()
            z = y + incr[0]
            y = self.box_project(z)
            incr[0] = z - y
            for j in range(len(b)):
                z = y + incr[j + 1]
                if norms2[j] == 0.0:
                    y_new = z
                else:
                    viol = A[j] @ z - b[j]
                    y_new = z - max(viol, 0.0) / norms2[j] * A[j]
                incr[j + 1] = z - y_new
                y = y_new
            # y can repeat over a cycle while the increments still move
            change = max(np.max(np.abs(y - y_prev)), np.max(np.abs(incr - incr_prev)))
            if change <= tol and check_feasibility(self, y, 1e-12):
                return y
            if change < best * (1 - 1e-3):
                best = change
                since_best = 0
            else:
                since_best += 1
                if since_best >= 100:
                    break
        try:
            return project_polyhedron(x, self.lower, self.upper, A, b)
        except QPInfeasible:
            return y


def check_feasibility(region: FeasibleRegion, x, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != region.n:
        raise ContractError(f"x has length {x.size}, expected {region.n}")
    if np.any(x < region.lower - tol) or np.any(x > region.upper + tol):
        return False
    return all(a @ x <= b + tol for a, b in region.affine_rows)


@dataclass
class ProblemSpec:
    """Dimensions, the compact domain, and a generator of the affine rows of g(., p) <= 0."""

    n_x: int
    n_p: int
    domain: FeasibleRegion
    constraint_template: Callable[[np.ndarray], Sequence[tuple[np.ndarray, float]]] | None = None

    def __post_init__(self):
        if self.domain.n != self.n_x:
            raise ContractError("domain dimension does not match n_x")
        if not np.all(np.isfinite(self.domain.lower)) or not np.all(np.isfinite(self.domain.upper)):
            raise ContractError("domain box must be bounded")
        if np.any(self.domain.lower >= self.domain.upper):
            raise ContractError("domain box needs lower < upper in every coordinate")

    def region(self, p) -> FeasibleRegion:
        rows = list(self.domain.affine_rows)
        if self.constraint_template is not None:
            rows += list(self.constraint_template(np.asarray(p, dtype=float)))
        return FeasibleRegion(self.domain.lower, self.domain.upper, rows)

    def constraint_jacobian(self, p) -> np.ndarray:
        """grad_x g(x, p) with one column per row of ``region(p).all_rows()``."""
        C, _ = self.region(p).all_rows()
        return C.T
