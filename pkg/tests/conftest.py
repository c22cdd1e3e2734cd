import numpy as np
import pytest

from mvsk.bench import gen_uniform_instance, stress_profiles
from mvsk.instance import center_panel

# acceptance criteria append (number, passed, detail) here; printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_panel(rng, n, T, scale=0.1):
    return center_panel(rng.normal(0.05, scale, size=(T, n)))


def random_portfolio(rng, n, tau=0.0):
    w = rng.dirichlet(np.ones(n))
    return tau + (1.0 - n * tau) * w


def random_tangent(rng, n):
    d = rng.standard_normal(n)
    return d - d.mean()


@pytest.fixture
def small_panel(rng):
    return random_panel(rng, 6, 40)


@pytest.fixture(params=[0, 1, 2], ids=["return-seeking", "risk-averse", "balanced"])
def profile(request):
    return stress_profiles()[request.param]


@pytest.fixture
def uniform40():
    return gen_uniform_instance(40, 252, 0)
