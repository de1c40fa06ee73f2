import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from minsurro.bench.ocp import OcpSpec, shifted_guess
from minsurro.config import TrainRun, config_to_dict, resolve
from minsurro.model import lse_gap_bound, softmin
from minsurro.region import FeasibleRegion, check_feasibility

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(float, st.integers(1, 6), elements=finite), st.floats(1e-3, 10.0))
@settings(deadline=None)
def test_softmin_sandwich(z, gamma):
    s = float(softmin(z, gamma))
    assert z.min() - lse_gap_bound(gamma, z.size) - 1e-9 <= s <= z.min() + 1e-12


@given(arrays(float, st.integers(1, 6), elements=finite), st.floats(1e-3, 10.0))
@settings(deadline=None)
def test_softmin_gap_shrinks_with_gamma(z, gamma):
    assert z.min() - float(softmin(z, gamma / 2)) <= z.min() - float(softmin(z, gamma)) + 1e-9


@given(
    arrays(float, 3, elements=st.floats(-5, 5)),
    arrays(float, 3, elements=st.floats(0, 3)),
    arrays(float, 3, elements=st.floats(-10, 10)),
)
@settings(max_examples=50, deadline=None)
def test_projection_feasible_and_idempotent(lower, width, x):
    region = FeasibleRegion(lower, lower + width, [(np.ones(3), float(np.sum(lower + 0.5 * width)))])
    y = region.project(x)
    assert check_feasibility(region, y, 1e-8)
    np.testing.assert_allclose(region.project(y), y, atol=1e-8)


@given(arrays(float, 10, elements=st.floats(-1, 1)))
def test_shifted_guess_keeps_last_block(u):
    g = shifted_guess(u, OcpSpec())
    np.testing.assert_array_equal(g[:8], u[2:])
    np.testing.assert_array_equal(g[8:], u[8:])


@given(st.integers(1, 50), st.floats(1e-4, 10.0), st.booleans())
def test_config_round_trip(K, gamma, shared):
    cfg = resolve(TrainRun, {}, {"K": str(K), "gamma": repr(gamma), "shared_head": str(shared)})
    assert resolve(TrainRun, config_to_dict(cfg)) == cfg
