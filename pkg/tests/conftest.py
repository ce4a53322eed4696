import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from plfilter.densities import Gaussian
from plfilter.experiments import example_density
from plfilter.moments import log_moments_from_log_values, power_moments
from plfilter.quadrature import EXAMPLE_GRID
from plfilter.solver import SurrogateParams

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance results collected for the end-of-session summary, keyed "01", "04a", ...
ACCEPTANCE_LINES: dict[str, str] = {}


def record(key: str, ok: bool, detail: str) -> bool:
    """Store one pass/fail line for the summary and return ``ok``."""
    ACCEPTANCE_LINES[key] = f"{'PASS' if ok else 'FAIL'}  criterion {key.lstrip('0')}: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def random_positive_poly(rng, n_quadratics=2, spread=3.0):
    """Product of quadratics ``(x - a)^2 + b^2``, lowest degree first."""
    c = np.array([1.0])
    for _ in range(n_quadratics):
        a, b = rng.normal(0.0, spread), rng.uniform(0.5, 3.0)
        c = np.convolve(c, [a * a + b * b, -2.0 * a, 1.0])
    return c


def random_params(rng, theta, spread=1.0, normalize=True, grid=EXAMPLE_GRID):
    """Random positive ``(P, Q)`` over ``theta``, optionally scaled to unit mass on ``grid``."""
    P = random_positive_poly(rng, spread=spread)
    Q = random_positive_poly(rng, spread=spread) * rng.uniform(0.5, 2.0)
    params = SurrogateParams(P[1:] / P[0], Q / P[0], theta)
    if normalize:
        mass = grid.weights @ params.pdf(grid.nodes)
        params = SurrogateParams(params.p, params.q * mass, theta)
    return params


@pytest.fixture(scope="session")
def grid():
    return EXAMPLE_GRID


@pytest.fixture(scope="session")
def example_targets(grid):
    """``{example: (target density, theta, sigma, xi)}`` for the three examples."""
    out = {}
    for k in (1, 2, 3):
        target, theta = example_density(k)
        sigma = power_moments(target, 4, grid)
        xi = log_moments_from_log_values(target.logpdf(grid.nodes), theta, grid, 4)
        out[k] = (target, theta, sigma, xi)
    return out


@pytest.fixture
def std_normal():
    return Gaussian(0.0, 1.0)
