import numpy as np
import pytest
from scipy.integrate import quad

from minsurro.bench.camel import (
    GLOBAL_MINIMIZERS,
    LOWER,
    UPPER,
    camel,
    camel_grad,
    distance_to_global,
    grid_points,
    is_global,
    local_descent,
    multistart_baseline,
)
from minsurro.bench.lissajous import (
    FrenetState,
    LissajousPath,
    cartesian_from_frenet,
    frenet_dynamics_step,
    frenet_from_cartesian,
    wrap_angle,
)
from minsurro.bench.ocp import OcpSpec
from minsurro.bench.tracking import (
    SIM_COLUMNS,
    CollectConfig,
    SimConfig,
    closed_loop_sim,
    collect_dataset,
    perturbations,
    residual_summary,
)
from minsurro.components import ContractError
from minsurro.diff import central_differences

# global minimum of the six-hump camel to 10 digits, from a converged local solve
CAMEL_MIN = -1.0316284535


@pytest.fixture(scope="module")
def path():
    return LissajousPath()


def test_camel_known_values():
    assert camel(0.0, 0.0) == 0.0
    for x in GLOBAL_MINIMIZERS:
        assert camel(*x) == pytest.approx(CAMEL_MIN, abs=1e-4)


def test_camel_gradient(rng):
    for _ in range(10):
        x = rng.uniform(LOWER, UPPER)
        np.testing.assert_allclose(camel_grad(x), central_differences(lambda z: camel(*z), x, 1e-6), atol=1e-7)


def test_descent_reaches_global_from_nearby_start():
    res = local_descent([0.2, -0.5])
    assert res.f == pytest.approx(CAMEL_MIN, abs=1e-9)
    assert distance_to_global(res.x) <= 1e-3 and is_global(res.f) and res.grad_norm <= 1e-8


def test_multistart_finds_both_kinds_of_basin():
    starts = np.array([[0.1, -0.7], [-1.7, 0.8], [1.7, -0.8]])
    out = multistart_baseline(starts=starts)
    assert [o[2] for o in out] == [True, False, False]


def test_grid_shape_and_extent():
    G = grid_points()
    assert G.shape == (201 * 101, 2)
    np.testing.assert_array_equal(G.min(axis=0), LOWER)
    np.testing.assert_array_equal(G.max(axis=0), UPPER)


def test_path_length_against_quadrature(path):
    length = quad(lambda t: path.speed(t), 0, 2 * np.pi, limit=500, epsabs=1e-13)[0]
    assert path.length == pytest.approx(length, rel=1e-12)
    assert OcpSpec().length == pytest.approx(path.length, rel=1e-12)


def test_arc_length_inverse(path, rng):
    s = rng.uniform(0, 1, 20)
    np.testing.assert_allclose(path.s_of_t(path.t_of_s(s)), s, atol=1e-12)


def test_curvature_of_known_point(path):
    # t = 0: position (A, 0), velocity (0, B b), acceleration (-A a^2, 0)
    _, heading, kappa = path.point(0.0)
    assert heading == pytest.approx(np.pi / 2)
    assert kappa == pytest.approx(path.A * path.a**2 * path.B * path.b / (path.B * path.b) ** 3)


def test_frenet_round_trip(path, rng):
    for _ in range(10):
        st = FrenetState(rng.uniform(), rng.uniform(-0.3, 0.3), rng.uniform(-1, 1))
        back = frenet_from_cartesian(cartesian_from_frenet(st, path), path, s_hint=st.s)
        assert back.s == pytest.approx(st.s, abs=1e-9)
        assert back.d == pytest.approx(st.d, abs=1e-9)
        assert back.theta == pytest.approx(st.theta, abs=1e-9)


def test_dynamics_step_straight_ahead(path):
    st = FrenetState(0.25, 0.0, 0.0)
    kappa = float(path.curvature_at_s(0.25))
    nxt = frenet_dynamics_step(st, [1.0, kappa * 1.0], path, 0.1)
    assert nxt.s == pytest.approx(0.25 + 0.1 / path.length)
    assert nxt.d == 0.0 and nxt.theta == pytest.approx(0.0, abs=1e-15)


def test_wrap_angle():
    np.testing.assert_allclose(wrap_angle([np.pi, -np.pi, 3 * np.pi / 2]), [np.pi, np.pi, -np.pi / 2])


def test_collect_small(path):
    rep = collect_dataset(CollectConfig(laps=2, problems_per_lap=2, lap_steps=4, augment=3, seed=4), path=path)
    ds = rep.dataset
    assert rep.problems == 4 and len(ds) == 4 * (1 + 3)
    assert ds.n_x == 10 and ds.n_p == 14 and ds.m == 22
    assert len(ds.optimal_rows()) == 4 and ds.constraint_jac.shape == (4, 10, 22)
    assert np.all(np.isfinite(ds.grad))
    again = collect_dataset(CollectConfig(laps=2, problems_per_lap=2, lap_steps=4, augment=3, seed=4), path=path)
    np.testing.assert_array_equal(again.dataset.x, ds.x)


def test_collect_config_contract():
    with pytest.raises(ContractError):
        CollectConfig(problems_per_lap=5, lap_steps=3)


def test_short_closed_loop(path):
    cfg = SimConfig(steps=5)
    reps = {m: closed_loop_sim(m, cfg, path=path) for m in ("cold", "shifted_2")}
    assert len(reps["cold"].rows[0]) == len(SIM_COLUMNS)
    assert reps["shifted_2"].column("sqp_iters").max() <= 2
    np.testing.assert_array_equal(reps["cold"].column("px")[:1], reps["shifted_2"].column("px")[:1])
    summary = residual_summary(reps)
    assert set(summary["modes"]) == {"cold", "shifted_2"}


def test_perturbations_are_shared_and_bounded():
    cfg = SimConfig(steps=50)
    a, b = perturbations(cfg), perturbations(cfg)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a[:, 0]) <= cfg.perturb_d) and np.all(np.abs(a[:, 1]) <= cfg.perturb_theta)


def test_learned_mode_needs_model():
    with pytest.raises(ContractError):
        closed_loop_sim("learned_2", SimConfig(steps=1))
    with pytest.raises(ContractError):
        closed_loop_sim("warm", SimConfig(steps=1))
