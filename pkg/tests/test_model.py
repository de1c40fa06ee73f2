import math

import numpy as np
import pytest

from conftest import FAMILY_SPECS, small_model
from minsurro.components import ComponentSpec, ContractError, HeadSpec, eval_component, eval_head, init_component, init_head
from minsurro.model import SurrogateModel, lse_gap_bound, make_architecture, softmin


@pytest.mark.parametrize("family", sorted(FAMILY_SPECS))
def test_components_convex_along_segments(family, rng):
    spec = FAMILY_SPECS[family]
    for _ in range(20):
        params = init_component(spec, 3, 2, rng)
        p = rng.normal(size=2)
        x, y = rng.normal(size=(2, 3)) * 2
        for t in (0.1, 0.5, 0.9):
            lhs = float(eval_component(spec, params, t * x + (1 - t) * y, p))
            rhs = t * float(eval_component(spec, params, x, p)) + (1 - t) * float(eval_component(spec, params, y, p))
            assert lhs <= rhs + 1e-9 * max(1.0, abs(rhs))


@pytest.mark.parametrize("activation", ["tanh", "softplus", "sigmoid", "relu"])
def test_monotone_head_nondecreasing(activation, rng):
    spec = HeadSpec("monotone", (5, 3), activation)
    for _ in range(10):
        params = init_head(spec, rng)
        t = np.sort(rng.normal(size=50) * 5)
        v = np.array([float(eval_head(spec, params, ti)) for ti in t])
        assert np.all(np.diff(v) >= -1e-12)


def test_identity_head_is_identity():
    assert float(eval_head(HeadSpec("identity"), {}, 2.5)) == 2.5


def test_exact_is_min_of_head_values(rng):
    m = small_model("icnn", K=3)
    for _ in range(10):
        x, p = rng.normal(size=2), rng.normal(size=1)
        v, i = m.exact(x, p)
        hv = m.head_values(x, p)
        assert v == hv.min() and i == int(np.argmin(hv))


def test_smoothed_within_lse_bound(rng):
    m = small_model("max_squared", K=3, gamma=0.2)
    for _ in range(20):
        x, p = rng.normal(size=2), rng.normal(size=1)
        exact, _ = m.exact(x, p)
        s = m.smoothed(x, p)
        assert exact - lse_gap_bound(0.2, 3) - 1e-12 <= s <= exact + 1e-12


def test_softmin_k1_is_identity():
    assert float(softmin(np.array([1.7]), 0.1)) == pytest.approx(1.7, abs=1e-15)
    assert lse_gap_bound(0.1, 1) == 0.0


def test_softmin_stable_for_large_values():
    z = np.array([1e6, 1e6 + 1.0])
    assert math.isfinite(float(softmin(z, 1e-3)))
    assert float(softmin(z, 1e-3)) == pytest.approx(1e6, abs=1e-9)


def test_theta_round_trip(rng):
    m = small_model("icnn")
    theta = rng.normal(size=m.n_theta)
    m2 = m.with_theta(theta)
    np.testing.assert_array_equal(m2.theta, theta)
    assert sum(s.stop - s.start for s in m2.theta_index().values()) == m.n_theta


def test_set_theta_rejects_wrong_length():
    m = small_model()
    with pytest.raises(ContractError):
        m.set_theta(np.zeros(m.n_theta + 1))


def test_shape_errors():
    m = small_model()
    with pytest.raises(ContractError):
        m.smoothed(np.zeros(3), np.zeros(1))
    with pytest.raises(ContractError):
        m.smoothed(np.zeros(2), np.zeros(2))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family="cubic"),
        dict(family="max_affine", pieces=0),
        dict(family="quadratic", alpha=-1.0),
        dict(family="icnn", widths=()),
    ],
)
def test_component_spec_contracts(kwargs):
    with pytest.raises(ContractError):
        ComponentSpec(**kwargs)


def test_architecture_contracts():
    with pytest.raises(ContractError):
        make_architecture(2, 0, FAMILY_SPECS["quadratic"], K=1, gamma=0.0)
    with pytest.raises(ContractError):
        make_architecture(2, 0, (), K=0)
    with pytest.raises(ContractError):
        HeadSpec("monotone", activation="sin")


def test_n_p_zero_model(rng):
    arch = make_architecture(2, 0, FAMILY_SPECS["max_squared"], K=2)
    m = SurrogateModel.create(arch, 0)
    assert np.isfinite(m.smoothed(rng.normal(size=2), np.zeros(0)))


def test_same_seed_same_parameters():
    a, b = small_model(seed=3), small_model(seed=3)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert not np.array_equal(a.theta, small_model(seed=4).theta)
