import numpy as np
import pytest
from scipy.optimize import minimize

from conftest import FAMILY_SPECS, clamp_solution, diag_quadratic_model, small_model
from minsurro.components import ContractError
from minsurro.qp import QPInfeasible, project_polyhedron, solve_qp
from minsurro.region import FeasibleRegion, ProblemSpec, check_feasibility
from minsurro.solve import INFEASIBLE, OPTIMAL, SolverOptions, decompose_solve, select_winner, solve_subproblem, worker_count


def test_box_quadratic_matches_clamp(rng):
    for _ in range(50):
        n = int(rng.integers(1, 5))
        scales = rng.uniform(0.3, 2.0, n)
        linear = rng.normal(size=n) * 3
        lo = rng.uniform(-1.0, 0.0, n)
        hi = lo + rng.uniform(0.1, 1.5, n)
        m = diag_quadratic_model(scales, linear)
        sol = solve_subproblem(m, 0, np.zeros(0), FeasibleRegion(lo, hi))
        assert sol.status == OPTIMAL
        np.testing.assert_allclose(sol.x_opt, clamp_solution(scales, linear, lo, hi), atol=1e-6)


def test_solve_qp_against_scipy(rng):
    for _ in range(20):
        n = 4
        M = rng.normal(size=(n, n))
        H = M @ M.T + 0.1 * np.eye(n)
        g = rng.normal(size=n)
        C = rng.normal(size=(6, n))
        e = rng.uniform(0.1, 1.0, 6)
        d = solve_qp(H, g, C, e)
        ref = minimize(
            lambda z: 0.5 * z @ H @ z + g @ z,
            np.zeros(n),
            jac=lambda z: H @ z + g,
            constraints=[{"type": "ineq", "fun": lambda z: e - C @ z, "jac": lambda z: -C}],
            method="SLSQP",
            options={"ftol": 1e-14, "maxiter": 500},
        )
        assert np.all(C @ d <= e + 1e-9)
        assert 0.5 * d @ H @ d + g @ d <= ref.fun + 1e-8


def test_solve_qp_infeasible():
    with pytest.raises(QPInfeasible):
        solve_qp(np.eye(1), np.zeros(1), np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))


def test_projection_is_closest_feasible_point(rng):
    region = FeasibleRegion([-1, -1], [1, 1], [(np.array([1.0, 1.0]), 0.5)])
    for _ in range(30):
        x = rng.normal(size=2) * 2
        y = region.project(x)
        assert check_feasibility(region, y, 1e-9)
        # projection optimality: (x - y)'(z - y) <= 0 for feasible z
        for z in ([-1, -1], [0.5, 0.0], [-1, 1], [1, -1], [0, 0]):
            assert (x - y) @ (np.array(z, float) - y) <= 1e-8
        np.testing.assert_allclose(y, project_polyhedron(x, region.lower, region.upper, *region.row_matrix()), atol=1e-8)


def test_region_all_rows_order():
    region = FeasibleRegion([0, -1], [2, 3], [(np.array([1.0, 2.0]), 4.0)])
    C, e = region.all_rows()
    np.testing.assert_array_equal(C[:2], -np.eye(2))
    np.testing.assert_array_equal(C[2:4], np.eye(2))
    np.testing.assert_array_equal(e, [0, 1, 2, 3, 4])
    assert region.m == 5


def test_region_contracts():
    with pytest.raises(ContractError):
        FeasibleRegion([1.0], [0.0])
    with pytest.raises(ContractError):
        FeasibleRegion([0.0, 0.0], [1.0, 1.0], [(np.ones(3), 1.0)])
    with pytest.raises(ContractError):
        ProblemSpec(1, 0, FeasibleRegion([-np.inf], [1.0]))


def test_problem_spec_region_and_jacobian():
    spec = ProblemSpec(2, 1, FeasibleRegion([0, 0], [1, 1]), lambda p: [(np.array([1.0, 1.0]), p[0])])
    region = spec.region([0.7])
    assert region.affine_rows[0][1] == 0.7
    assert spec.constraint_jacobian([0.7]).shape == (2, 5)


def test_empty_region_reports_infeasible():
    m = small_model("quadratic", n_p=1)
    region = FeasibleRegion([0, 0], [1, 1], [(np.array([1.0, 1.0]), -1.0)])
    res = decompose_solve(m, [0.0], region)
    assert res.status == INFEASIBLE and res.x_star is None and res.winner == -1


@pytest.mark.parametrize("family", sorted(FAMILY_SPECS))
def test_subproblem_reaches_global_minimum(family, rng):
    m = small_model(family, K=2)
    region = FeasibleRegion([-1, -1], [1, 1], [(np.array([1.0, -1.0]), 0.5)])
    p = rng.normal(size=1)
    sol = solve_subproblem(m, 0, p, region)
    assert sol.status == OPTIMAL
    # no point of a fine feasible grid beats the solver by more than the tolerance
    g = np.linspace(-1, 1, 81)
    pts = np.array([(a, b) for a in g for b in g if a - b <= 0.5])
    vals = np.array([m.component_values(x, p)[0] for x in pts])
    assert sol.value <= vals.min() + 1e-7


def test_decomposition_value_matches_heads(rng):
    m = small_model("icnn", K=3)
    region = FeasibleRegion([-1, -1], [1, 1])
    p = rng.normal(size=1)
    res = decompose_solve(m, p, region)
    expected = min(m.apply_head(i, s.value) for i, s in enumerate(res.per_component))
    assert res.value_star == expected
    assert res.value_star == m.head_values(res.x_star, p)[res.winner] or np.isclose(
        res.value_star, m.head_values(res.x_star, p)[res.winner], rtol=0, atol=1e-12
    )


def test_parallel_and_serial_agree(rng):
    m = small_model("max_squared", K=3)
    region = FeasibleRegion([-1, -1], [1, 1])
    p = rng.normal(size=1)
    a = decompose_solve(m, p, region, SolverOptions(parallel=True))
    b = decompose_solve(m, p, region, SolverOptions(parallel=False))
    assert a.winner == b.winner and a.value_star == b.value_star
    np.testing.assert_array_equal(a.x_star, b.x_star)


def test_select_winner_tie_goes_to_lowest_index():
    from minsurro.solve import SubproblemSolution

    sols = [SubproblemSolution(np.zeros(1), 1.0, 1, OPTIMAL, 0.0), SubproblemSolution(np.zeros(1), 1.0, 1, OPTIMAL, 0.0)]
    winner, hv = select_winner(_TwoHeads(), sols)
    assert winner == 0 and hv == [1.0, 1.0]


class _TwoHeads:
    def apply_head(self, i, t):
        return float(t)


def test_winner_prefers_optimal_over_iter_limit():
    from minsurro.solve import ITER_LIMIT, SubproblemSolution

    sols = [SubproblemSolution(np.zeros(1), -5.0, 9, ITER_LIMIT, 1.0), SubproblemSolution(np.zeros(1), 1.0, 1, OPTIMAL, 0.0)]
    assert select_winner(_TwoHeads(), sols)[0] == 1


def test_worker_count_cap(monkeypatch):
    monkeypatch.setenv("MINSURRO_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.setenv("MINSURRO_THREADS", "0")
    assert worker_count(3) == 3


def test_region_dimension_mismatch():
    m = small_model()
    with pytest.raises(ContractError):
        solve_subproblem(m, 0, [0.0], FeasibleRegion([0, 0, 0], [1, 1, 1]))
