import numpy as np
import pytest

from minsurro.components import ComponentSpec, HeadSpec
from minsurro.model import SurrogateModel, make_architecture

FAMILY_SPECS = {
    "quadratic": ComponentSpec("quadratic", alpha=0.1, coef_hidden=(6,)),
    "max_affine": ComponentSpec("max_affine", pieces=4, coef_hidden=(6,)),
    "max_squared": ComponentSpec("max_squared", pieces=4, coef_hidden=(6,)),
    "icnn": ComponentSpec("icnn", widths=(5, 5), n_q=3),
}


def small_model(family="max_squared", n_x=2, n_p=1, K=2, head="monotone", gamma=0.1, seed=0, shared_head=False):
    arch = make_architecture(
        n_x, n_p, FAMILY_SPECS[family], K=K, head=HeadSpec(head), shared_head=shared_head, gamma=gamma
    )
    return SurrogateModel.create(arch, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def diag_quadratic_model(scales, linear, offset=0.0):
    """Single quadratic component sum_j (l_j x_j)^2 + c'x + d with constant coefficients."""
    scales = np.asarray(scales, dtype=float)
    n = scales.size
    arch = make_architecture(n, 0, ComponentSpec("quadratic", coef_hidden=()), K=1)
    m = SurrogateModel.create(arch, 0)
    theta = np.zeros(m.n_theta)
    idx = m.theta_index()
    tril = np.zeros(n * (n + 1) // 2)
    tril[[j * (j + 1) // 2 + j for j in range(n)]] = scales
    theta[idx["['components'][0]['L'][0]['b']"]] = tril
    theta[idx["['components'][0]['c'][0]['b']"]] = linear
    theta[idx["['components'][0]['d'][0]['b']"]] = offset
    return m.with_theta(theta)


def clamp_solution(scales, linear, lower, upper):
    return np.clip(-np.asarray(linear) / (2 * np.asarray(scales) ** 2), lower, upper)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
