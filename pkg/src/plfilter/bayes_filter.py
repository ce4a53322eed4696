"""Moment-based Bayes filter with rational surrogate priors, and an exact grid filter.

One filter step takes the current prior density, applies the observation
likelihood on the grid, and then predicts the next prior in two ways:

* power moments by exact propagation through the linear dynamics,
* generalized logarithmic moments from the tabulated convolution of the
  posterior with the process noise.

A rational surrogate is then fitted to both moment vectors and becomes the next
prior. The grid filter instead carries the tabulated convolution forward and
serves as the reference for the surrogate filter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .densities import Density, Gaussian, GridDensity
from .errors import DegenerateLikelihoodError, ModelError
from .moments import (
    MomentVector,
    generalized_log_moments,
    grid_power_moments,
    noise_moments,
    power_moments,
    propagate_power_moments,
)
from .quadrature import GridFunction, GridSpec, convolution_matrix, integrate
from .solver import SolverOptions, SurrogateParams, solve, solve_power_only

__all__ = [
    "SystemModel",
    "StepModel",
    "FilterState",
    "ThetaRule",
    "measurement_update",
    "time_update_oracle",
    "drifted_noise_moments",
    "initial_state",
    "filter_step",
    "grid_filter_run",
]

# nodes where a tabulated prior underflows are floored before taking logs
_DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class StepModel:
    """Scalar model ``x' = f x + drift + eta`` observed as ``y = h x + eps``."""

    f: float
    h: float
    drift: float
    eta: Density
    eps: Density


@dataclass(frozen=True)
class SystemModel:
    """Scalar linear system with arbitrary noise densities.

    ``f``, ``h`` and ``drift`` may be constants or per-step sequences.
    """

    f: float | Sequence[float]
    h: float | Sequence[float]
    eta: Density
    eps: Density
    drift: float | Sequence[float] = 0.0

    @staticmethod
    def _at(value, t: int) -> float:
        if np.ndim(value) == 0:
            return float(value)
        return float(value[t])

    def row(self, t: int) -> StepModel:
        return StepModel(self._at(self.f, t), self._at(self.h, t), self._at(self.drift, t),
                         self.eta, self.eps)


@dataclass(frozen=True)
class ThetaRule:
    """Gaussian reference density built from the first two power moments.

    The variance is ``variance_factor`` times the central variance
    ``sigma_2 - sigma_1^2``.
    """

    variance_factor: float = 1.0

    def __post_init__(self):
        if not self.variance_factor > 0:
            raise ValueError("variance_factor must be positive")

    def __call__(self, sigma) -> Gaussian:
        var = sigma[1] - sigma[0] ** 2
        if not var > 0:
            raise ValueError("moments imply a nonpositive variance")
        return Gaussian(float(sigma[0]), float(self.variance_factor * var))


@dataclass(frozen=True)
class FilterState:
    """Prior for step ``t`` together with its moments and reference density.

    ``fit`` holds the solver output that produced ``prior`` and ``posterior``
    the tabulated posterior of the previous step it was predicted from; both
    are None for the initial state.
    """

    t: int
    prior: Density
    moments: MomentVector
    theta: Density
    fit: SurrogateParams | None = field(default=None, repr=False, compare=False)
    posterior: GridFunction | None = field(default=None, repr=False, compare=False)


def measurement_update(prior: Density, y: float, h: float, eps: Density,
                       grid: GridSpec) -> GridFunction:
    """Posterior ``eps(y - h x) prior(x)``, normalized on the grid.

    Raises:
        DegenerateLikelihoodError: If the normalizer vanishes.
    """
    x = grid.nodes
    log_post = prior.logpdf(x) + eps.logpdf(y - h * x)
    peak = np.max(log_post)
    if not np.isfinite(peak):
        raise DegenerateLikelihoodError(f"observation {y} has zero likelihood on the grid")
    post = np.exp(log_post - peak)
    mass = integrate(GridFunction(grid, post))
    if not mass > 0:
        raise DegenerateLikelihoodError(f"observation {y} has zero likelihood on the grid")
    return GridFunction(grid, post / mass)


def _noise_sd(eta: Density) -> float | None:
    m1, m2 = eta.raw_moment(1), eta.raw_moment(2)
    if m1 is None or m2 is None:
        return None
    return float(np.sqrt(max(m2 - m1 * m1, 0.0)))


def _transition_matrix(grid: GridSpec, f: float, drift: float, eta: Density) -> np.ndarray:
    sd = _noise_sd(eta)
    if sd is not None and sd < 2.0 * abs(f) * grid.h:
        warnings.warn(f"process noise sd {sd:.3g} is below two grid cells ({grid.h:.3g}); "
                      "the tabulated time update is not resolved", RuntimeWarning, stacklevel=5)
    if f == 1.0:
        return convolution_matrix(grid, lambda d: eta.pdf(d - drift), grid)
    x = grid.nodes
    return eta.pdf(x[:, None] - drift - f * x[None, :]) * grid.weights[None, :]


@lru_cache(maxsize=16)
def _cached_transition(grid: GridSpec, f: float, drift: float, eta: Density) -> np.ndarray:
    M = _transition_matrix(grid, f, drift, eta)
    M.setflags(write=False)
    return M


def _transition(grid, f, drift, eta):
    try:
        return _cached_transition(grid, f, drift, eta)
    except TypeError:  # unhashable density
        return _transition_matrix(grid, f, drift, eta)


def time_update_oracle(post: GridFunction, f: float, drift: float, eta: Density,
                       grid: GridSpec | None = None) -> GridFunction:
    """Tabulated prior ``integral post(x') eta(x - drift - f x') dx'``, normalized.

    The kernel is sampled at the nodes, so the noise must span a few grid cells;
    narrower noise triggers a ``RuntimeWarning``.

    Raises:
        ModelError: If ``f`` is zero.
    """
    if f == 0:
        raise ModelError("state gain f must be nonzero")
    grid = grid or post.grid
    if grid != post.grid:
        raise ValueError("the posterior must be tabulated on the output grid")
    prior = _transition(grid, float(f), float(drift), eta) @ post.values
    prior = np.maximum(prior, _DENSITY_FLOOR)
    return GridFunction(grid, prior / integrate(GridFunction(grid, prior)))


def drifted_noise_moments(eta: Density, drift: float, two_n: int,
                          grid: GridSpec | None = None) -> np.ndarray:
    """``E[(drift + eta)^k]`` for ``k = 1..two_n``."""
    point = drift ** np.arange(1, two_n + 1)
    return propagate_power_moments(noise_moments(eta, two_n, grid), 1.0, point, two_n)


def initial_state(init: Density, two_n: int, grid: GridSpec,
                  theta_rule: Callable | None = None) -> FilterState:
    """State at ``t = 0`` with moments of the initial density."""
    theta_rule = theta_rule or ThetaRule()
    sigma = power_moments(init, two_n, grid)
    theta = theta_rule(sigma)
    xi = generalized_log_moments(GridFunction(grid, init.pdf(grid.nodes)), theta, two_n)
    return FilterState(0, init, MomentVector(sigma, xi, theta), theta)


def filter_step(state: FilterState, y: float, model: StepModel, grid: GridSpec,
                two_n: int = 4, opts: SolverOptions | None = None,
                theta_rule: Callable | None = None, power_only: bool = False) -> FilterState:
    """Advance the surrogate filter by one observation.

    Args:
        state: Current prior.
        y: Observation at step ``state.t``.
        model: Dynamics and noise for this step.
        grid: Quadrature grid.
        two_n: Moment order.
        opts: Solver settings.
        theta_rule: Maps power moments to the next reference density.
        power_only: Fit ``theta / Q`` to power moments only.

    Returns:
        The state for step ``t + 1``, whose prior is the fitted surrogate.
    """
    theta_rule = theta_rule or ThetaRule()
    post = measurement_update(state.prior, y, model.h, model.eps, grid)
    post_moments = grid_power_moments(post, two_n)
    sigma = propagate_power_moments(post_moments, model.f,
                                    drifted_noise_moments(model.eta, model.drift, two_n, grid),
                                    two_n)
    theta = theta_rule(sigma)
    if power_only:
        fit = solve_power_only(sigma, theta, two_n, opts, grid)
        xi = np.zeros(two_n)
    else:
        prior_grid = time_update_oracle(post, model.f, model.drift, model.eta, grid)
        xi = generalized_log_moments(prior_grid, theta, two_n)
        fit = solve(sigma, xi, theta, two_n, opts, grid)
    return FilterState(state.t + 1, fit.density, MomentVector(sigma, xi, theta), theta, fit, post)


def grid_filter_run(model: SystemModel, observations: Sequence[float], init: Density,
                    grid: GridSpec) -> list[GridFunction]:
    """Exact grid filter; returns the prior before each observation and after the last."""
    prior = GridFunction(grid, init.pdf(grid.nodes))
    prior = replace(prior, values=prior.values / integrate(prior))
    priors = [prior]
    for t, y in enumerate(observations):
        row = model.row(t)
        post = measurement_update(GridDensity(grid, prior.values), y, row.h, row.eps, grid)
        prior = time_update_oracle(post, row.f, row.drift, row.eta, grid)
        priors.append(prior)
    return priors
