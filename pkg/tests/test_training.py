import numpy as np
import pytest

from conftest import small_model
from minsurro.components import ContractError
from minsurro.data import TrainingDataset
from minsurro.optim import Adam, lbfgs
from minsurro.training import HISTORY_COLUMNS, AdamConfig, FinetuneConfig, TrainConfig, train


def rosenbrock(x):
    f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
    return f, g


def test_lbfgs_solves_rosenbrock():
    x, f, it = lbfgs(rosenbrock, np.array([-1.2, 1.0]), max_iter=200)
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-6)
    assert f < 1e-12 and it < 200


def test_lbfgs_never_worse_than_start():
    x0 = np.array([1.0, 1.0])
    _, f, _ = lbfgs(rosenbrock, x0, max_iter=5)
    assert f <= rosenbrock(x0)[0]


def test_adam_first_step_is_learning_rate_sized():
    opt = Adam(learning_rate=0.01)
    theta = opt.step(np.array([1.0, -2.0]), np.array([3.0, -0.5]))
    np.testing.assert_allclose(theta, [0.99, -1.99], atol=1e-8)


def test_adam_minimizes_quadratic():
    opt = Adam(learning_rate=0.05)
    th = np.array([3.0, -4.0])
    for _ in range(2000):
        th = opt.step(th, 2 * th)
    assert np.linalg.norm(th) < 1e-3
    with pytest.raises(ValueError):
        Adam(learning_rate=0.0)


def fit_data(rng, n=60):
    x = rng.uniform(-1, 1, (n, 2))
    p = rng.uniform(-1, 1, (n, 1))
    f = np.minimum((x[:, 0] - p[:, 0]) ** 2, (x[:, 1] + 0.5) ** 2 + 0.2)
    return TrainingDataset(x, p, f)


def test_training_reduces_loss_and_records_history(rng):
    ds = fit_data(rng)
    cfg = TrainConfig(adam=AdamConfig(epochs=30, learning_rate=1e-2), finetune=FinetuneConfig(iterations=30))
    res = train(small_model("max_squared"), ds, cfg)
    hist = np.array(res.history)
    assert hist.shape[1] == len(HISTORY_COLUMNS)
    assert hist[-1, 1] < hist[0, 1]
    assert np.all(np.diff(hist[:, 0]) > 0)
    assert res.train_mse == pytest.approx(hist[-1, 2], rel=1e-10)


def test_training_is_deterministic(rng):
    ds = fit_data(rng)
    cfg = TrainConfig(adam=AdamConfig(epochs=10, batch=16), finetune=FinetuneConfig(iterations=10), restarts=2, seed=5)
    a = train(small_model("icnn"), ds, cfg)
    b = train(small_model("icnn"), ds, cfg)
    np.testing.assert_array_equal(a.model.theta, b.model.theta)
    assert a.best_index == b.best_index


def test_zero_iterations_keep_initial_theta(rng):
    m = small_model()
    cfg = TrainConfig(adam=AdamConfig(epochs=0), finetune=FinetuneConfig(enabled=False))
    res = train(m, fit_data(rng), cfg)
    np.testing.assert_array_equal(res.model.theta, m.theta)


def test_best_restart_is_selected(rng):
    ds = fit_data(rng)
    cfg = TrainConfig(adam=AdamConfig(epochs=20, learning_rate=1e-2), finetune=FinetuneConfig(enabled=False), restarts=3, selection="train_mse")
    res = train(small_model(), ds, cfg)
    assert res.best_index == int(np.argmin([r.train_mse for r in res.restarts]))


@pytest.mark.parametrize(
    "kwargs",
    [dict(w1=-1.0), dict(restarts=0), dict(gamma=0.0), dict(selection="val_r2"), dict(adam=dict(epochs=-1))],
)
def test_train_config_contracts(kwargs):
    with pytest.raises(ContractError):
        TrainConfig(**kwargs)
