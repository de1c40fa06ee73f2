import numpy as np
import pytest

from conftest import small_model
from minsurro.components import ContractError
from minsurro.data import Sample, TrainingDataset, concat_datasets, projected_sample, sample_parameters
from minsurro.diff import NonFiniteLossError, central_differences, grad_theta_loss, grad_x_smoothed, gradcheck
from minsurro.losses import CompositeLoss, loss_fit, loss_total, mse, r2_score, reg_gradmatch, reg_optimality
from minsurro.region import FeasibleRegion

BOX = FeasibleRegion([-1, -1], [1, 1])


def planted_dataset(rng, n=12, n_p=1):
    """Optimal rows whose recorded gradients equal -J lambda exactly."""
    C, _ = BOX.all_rows()
    J = C.T
    x = rng.uniform(-1, 1, (n, 2))
    p = rng.normal(size=(n, n_p))
    lam = rng.uniform(0, 1, (n, C.shape[0]))
    grad = -lam @ C
    ds = TrainingDataset(x, p, rng.normal(size=n), grad=grad, dual=lam, is_optimal=np.ones(n, bool))
    return ds.attach_constraints(lambda _p: J)


def test_regularizers_coincide_when_stationarity_is_planted(rng):
    ds = planted_dataset(rng)
    m = small_model("icnn")
    r1 = reg_optimality(m, ds.samples(), ds.constraint_jac, w1=0.3)
    r2 = reg_gradmatch(m, ds.samples(), w2=0.3)
    assert abs(r1 - r2) <= 1e-10 * max(1.0, abs(r1))


def test_loss_parts_add_up(rng):
    ds = planted_dataset(rng)
    m = small_model("max_squared")
    loss = CompositeLoss(m, ds, w1=0.2, w2=0.5)
    total, fit, r1, r2 = loss.parts(m.theta)
    assert total == pytest.approx(fit + r1 + r2, rel=1e-14)
    assert fit == pytest.approx(loss_fit(m, ds), rel=1e-14)
    assert total == pytest.approx(loss_total(m, ds, 0.2, 0.5), rel=1e-14)
    assert fit == pytest.approx(mse(m, ds), rel=1e-12)


def test_theta_gradient_matches_finite_differences(rng):
    ds = planted_dataset(rng, n=8)
    m = small_model("icnn")
    loss = CompositeLoss(m, ds, w1=0.1, w2=0.1)
    theta = m.theta
    coords = rng.choice(m.n_theta, 25, replace=False)
    rep = gradcheck(lambda th: loss.parts(th)[0], theta, 1e-6, grad=grad_theta_loss(loss, theta), coords=coords)
    assert rep.max_rel_err <= 1e-4


def test_x_gradient_matches_finite_differences(rng):
    m = small_model("quadratic", head="monotone")
    for _ in range(5):
        x, p = rng.normal(size=2), rng.normal(size=1)
        rep = gradcheck(lambda z: m.smoothed(z, p), x, 1e-6, grad=grad_x_smoothed(m, x, p))
        assert rep.max_rel_err <= 1e-5


def test_central_differences_on_polynomial():
    g = central_differences(lambda z: z[0] ** 3 + 2 * z[1], np.array([1.0, 5.0]), 1e-4)
    np.testing.assert_allclose(g, [3.0, 2.0], atol=1e-7)
    with pytest.raises(ValueError):
        gradcheck(lambda z: z[0], np.zeros(1), h=0.0)


def test_non_finite_loss_names_sample(rng):
    m = small_model()
    x = rng.normal(size=(3, 2))
    x[1, 0] = np.nan
    ds = TrainingDataset(x, np.zeros((3, 1)), np.zeros(3))
    with pytest.raises(NonFiniteLossError) as err:
        grad_theta_loss(CompositeLoss(m, ds), m.theta)
    assert "sample 1" in str(err.value)


def test_optimality_term_needs_constraint_gradients(rng):
    ds = planted_dataset(rng)
    ds.constraint_jac = None
    with pytest.raises(ContractError):
        CompositeLoss(small_model(), ds, w1=1.0)


def test_loss_contracts(rng):
    ds = planted_dataset(rng)
    with pytest.raises(ContractError):
        CompositeLoss(small_model(), ds, w1=-1.0)


def test_sample_contracts():
    with pytest.raises(ContractError):
        Sample([0.0], [], 1.0, dual=[1.0])
    with pytest.raises(ContractError):
        Sample([0.0], [], 1.0, dual=[-1.0], is_optimal=True)
    with pytest.raises(ContractError):
        Sample([0.0], [], 1.0, grad=[np.inf])


def test_samples_round_trip(rng):
    ds = planted_dataset(rng, n=4)
    back = TrainingDataset.from_samples(ds.samples())
    np.testing.assert_array_equal(back.x, ds.x)
    np.testing.assert_array_equal(back.dual, ds.dual)


def test_subset_keeps_constraint_jacobians(rng):
    ds = planted_dataset(rng, n=6)
    sub = ds.subset([1, 3, 4])
    assert sub.constraint_jac.shape == (3, 2, 4)
    assert len(sub) == 3


def test_concat_fills_missing_groups(rng):
    a = TrainingDataset(rng.normal(size=(2, 2)), np.zeros((2, 0)), np.zeros(2), grad=np.ones((2, 2)))
    b = TrainingDataset(rng.normal(size=(3, 2)), np.zeros((3, 0)), np.zeros(3))
    c = concat_datasets([a, b])
    assert len(c) == 5
    np.testing.assert_array_equal(c.grad_rows(), [0, 1])


def test_projected_sample_lands_on_boundary(rng):
    X = projected_sample(BOX, np.array([1.0, 1.0]), 2000, rng)
    assert np.all(np.abs(X) <= 1.0)
    assert np.mean(np.any(np.abs(X) == 1.0, axis=1)) > 0.3


def test_sample_parameters_modes(rng):
    P = sample_parameters("uniform", 10, rng, FeasibleRegion(np.zeros(3), np.ones(3)))
    assert P.shape == (10, 3) and np.all((P >= 0) & (P <= 1))
    Q = sample_parameters("inherited", 5, inherited=[[1.0], [2.0]])
    np.testing.assert_array_equal(Q.ravel(), [1, 2, 1, 2, 1])
    with pytest.raises(ContractError):
        sample_parameters("inherited", 5, inherited=[])
    with pytest.raises(ContractError):
        sample_parameters("grid", 5)


def test_r2_score():
    assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0
    assert r2_score([1, 2, 3], [2, 2, 2]) == 0.0
