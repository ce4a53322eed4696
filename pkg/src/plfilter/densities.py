"""Scalar probability densities with pointwise and log evaluation.

Every family exposes ``pdf``, ``logpdf``, ``sample`` and ``raw_moment``.
``logpdf`` is evaluated in log space wherever possible so that tails far
below the double-precision range stay finite; values are clamped to
``LOG_FLOOR`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import logsumexp, zeta

from .errors import CapabilityError, PositivityError
from .quadrature import GridSpec, integrate, GridFunction

__all__ = [
    "FLOOR",
    "LOG_FLOOR",
    "Density",
    "Gaussian",
    "GaussianMixture",
    "LaplaceMixture",
    "GenLogisticMixture",
    "Gumbel",
    "Uniform",
    "RationalSurrogate",
    "shifted_to_raw",
    "raw_to_shifted",
    "GridDensity",
    "gaussian_raw_moment",
    "gumbel_cumulant",
]

FLOOR = 1e-300
LOG_FLOOR = float(np.log(FLOOR))
EULER_GAMMA = 0.57721566490153286061


class Density:
    """Interface shared by all density families."""

    def logpdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        """Density value; ``exp(logpdf)`` unless a family overrides it."""
        return np.exp(self.logpdf(x))

    def log_eval(self, x):
        """Log density clamped from below at ``LOG_FLOOR``."""
        return np.maximum(self.logpdf(x), LOG_FLOOR)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} does not support sampling")

    def raw_moment(self, k: int) -> float | None:
        """Exact ``E[X^k]`` if a closed form is known, else ``None``."""
        return None

    def mean(self) -> float | None:
        return self.raw_moment(1)

    def variance(self) -> float | None:
        m1, m2 = self.raw_moment(1), self.raw_moment(2)
        if m1 is None or m2 is None:
            return None
        return m2 - m1 * m1


def _double_factorial(n: int) -> int:
    return int(np.prod(np.arange(n, 0, -2))) if n > 0 else 1


def gaussian_raw_moment(mean: float, variance: float, k: int) -> float:
    """``E[X^k]`` for ``X ~ N(mean, variance)`` by binomial expansion."""
    total = 0.0
    for j in range(0, k + 1, 2):
        total += comb(k, j) * mean ** (k - j) * variance ** (j // 2) * _double_factorial(j - 1)
    return float(total)


def _moments_from_cumulants(kappa: list[float], k: int) -> float:
    # recursion m_n = sum_{j=1}^{n} C(n-1, j-1) kappa_j m_{n-j}
    m = [1.0]
    for n in range(1, k + 1):
        m.append(sum(comb(n - 1, j - 1) * kappa[j] * m[n - j] for j in range(1, n + 1)))
    return m[k]


def gumbel_cumulant(scale: float, loc: float, j: int) -> float:
    """``j``-th cumulant of the Gumbel (maximum) law with given location and scale."""
    if j == 1:
        return loc + EULER_GAMMA * scale
    return factorial(j - 1) * float(zeta(j)) * scale**j


def _as_arrays(*arrays):
    return [np.atleast_1d(np.asarray(a, dtype=float)) for a in arrays]


def _check_weights(weights: np.ndarray):
    if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, rtol=0, atol=1e-12):
        raise ValueError("mixture weights must be nonnegative and sum to 1")


@dataclass(frozen=True)
class Gaussian(Density):
    """Normal density ``N(mean, variance)``."""

    mu: float
    var: float

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError("variance must be positive")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * np.log(2 * np.pi * self.var) - (x - self.mu) ** 2 / (2 * self.var)

    def sample(self, rng, n):
        return rng.normal(self.mu, np.sqrt(self.var), size=n)

    def raw_moment(self, k):
        return gaussian_raw_moment(self.mu, self.var, k)


@dataclass(frozen=True)
class GaussianMixture(Density):
    """Finite mixture of normal densities."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w, m, v = _as_arrays(self.weights, self.means, self.variances)
        _check_weights(w)
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        comp = -0.5 * np.log(2 * np.pi * self.variances) - (x - self.means) ** 2 / (2 * self.variances)
        return logsumexp(comp, axis=-1, b=self.weights)

    def sample(self, rng, n):
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return rng.normal(self.means[idx], np.sqrt(self.variances[idx]))

    def raw_moment(self, k):
        return float(sum(w * gaussian_raw_moment(m, v, k)
                         for w, m, v in zip(self.weights, self.means, self.variances)))


@dataclass(frozen=True)
class LaplaceMixture(Density):
    """Mixture of Laplace densities ``exp(-|x - loc| / scale) / (2 scale)``."""

    weights: np.ndarray
    locs: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        w, m, b = _as_arrays(self.weights, self.locs, self.scales)
        _check_weights(w)
        if np.any(b <= 0):
            raise ValueError("scales must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "locs", m)
        object.__setattr__(self, "scales", b)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        comp = -np.log(2 * self.scales) - np.abs(x - self.locs) / self.scales
        return logsumexp(comp, axis=-1, b=self.weights)

    def sample(self, rng, n):
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return rng.laplace(self.locs[idx], self.scales[idx])

    def raw_moment(self, k):
        total = 0.0
        for w, m, b in zip(self.weights, self.locs, self.scales):
            # E[(m + bL)^k] with E[L^j] = j! for even j, 0 for odd j
            total += w * sum(comb(k, j) * m ** (k - j) * b**j * factorial(j)
                             for j in range(0, k + 1, 2))
        return float(total)


@dataclass(frozen=True)
class GenLogisticMixture(Density):
    """Mixture of shifted type-I generalized logistic densities.

    A component with shift ``c`` and shape ``a`` has density
    ``a exp(-(x - c)) / (1 + exp(-(x - c)))^(a + 1)``.
    """

    weights: np.ndarray
    shifts: np.ndarray
    shapes: np.ndarray

    def __post_init__(self):
        w, c, a = _as_arrays(self.weights, self.shifts, self.shapes)
        _check_weights(w)
        if np.any(a <= 0):
            raise ValueError("shapes must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "shifts", c)
        object.__setattr__(self, "shapes", a)

    def logpdf(self, x):
        z = np.asarray(x, dtype=float)[..., None] - self.shifts
        comp = np.log(self.shapes) - z - (self.shapes + 1) * np.logaddexp(0.0, -z)
        return logsumexp(comp, axis=-1, b=self.weights)

    def sample(self, rng, n):
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        u = rng.uniform(size=n)
        # inverse CDF of F(z) = (1 + e^-z)^-a
        return self.shifts[idx] - np.log(u ** (-1.0 / self.shapes[idx]) - 1.0)


@dataclass(frozen=True)
class Gumbel(Density):
    """Gumbel (maximum) density ``exp(-z - exp(-z)) / scale`` with ``z = (x - loc) / scale``."""

    scale: float
    loc: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        with np.errstate(over="ignore"):
            return -np.log(self.scale) - z - np.exp(-z)

    def sample(self, rng, n):
        u = rng.uniform(size=n)
        return self.loc - self.scale * np.log(-np.log(u))

    def raw_moment(self, k):
        kappa = [0.0] + [gumbel_cumulant(self.scale, self.loc, j) for j in range(1, k + 1)]
        return float(_moments_from_cumulants(kappa, k))


@dataclass(frozen=True)
class Uniform(Density):
    """Uniform density on ``[lo, hi]``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, -np.log(self.hi - self.lo), -np.inf)

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, size=n)

    def raw_moment(self, k):
        return (self.hi ** (k + 1) - self.lo ** (k + 1)) / ((k + 1) * (self.hi - self.lo))


def shifted_to_raw(coef: np.ndarray, center: float, scale: float) -> np.ndarray:
    """Monomial coefficients in ``x`` of ``sum_k coef[k] ((x - center) / scale)^k``."""
    poly = npoly.Polynomial(coef)(npoly.Polynomial([-center / scale, 1.0 / scale]))
    out = np.zeros(len(coef))
    out[: len(poly.coef)] = poly.coef
    return out


def raw_to_shifted(coef: np.ndarray, center: float, scale: float) -> np.ndarray:
    """Inverse of :func:`shifted_to_raw`."""
    poly = npoly.Polynomial(coef)(npoly.Polynomial([center, scale]))
    out = np.zeros(len(coef))
    out[: len(poly.coef)] = poly.coef
    return out


@dataclass(frozen=True)
class RationalSurrogate(Density):
    """Density ``P(x) theta(x) / Q(x)`` with polynomials ``P`` and ``Q`` of equal degree.

    The polynomials are stored in powers of ``u = (x - center) / scale`` so that
    surrogates fitted far from the origin evaluate without cancellation. The
    canonical coefficients, normalized so that ``P(0) = 1``, are available as
    :attr:`p` (``p_1..p_2n``) and :attr:`q` (``q_0..q_2n``).

    Between the nodes of the grid on which positivity was enforced, a fitted
    ``P`` may dip marginally below zero; ``pdf`` clips the numerator at zero.

    Attributes:
        num: Coefficients of ``P`` in powers of ``u``.
        den: Coefficients of ``Q`` in powers of ``u``.
        theta: Reference density.
        center: Shift of ``u``.
        scale: Scale of ``u``.
        origin_value: ``P(0)`` when known exactly. Recovering it from the
            shifted coefficients cancels badly when ``|center| / scale`` is large.
    """

    num: np.ndarray
    den: np.ndarray
    theta: Density
    center: float = 0.0
    scale: float = 1.0
    origin_value: float | None = None

    def __post_init__(self):
        num, den = _as_arrays(self.num, self.den)
        if len(num) != len(den):
            raise ValueError("P and Q must have the same number of coefficients")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def from_raw(cls, p, q, theta: Density) -> "RationalSurrogate":
        """Build from ``P = 1 + sum p_k x^k`` and ``Q = sum q_k x^k``."""
        p, q = _as_arrays(p, q)
        if len(q) != len(p) + 1:
            raise ValueError("q must have exactly one more coefficient than p")
        return cls(np.concatenate([[1.0], p]), q, theta)

    @property
    def order(self) -> int:
        return len(self.num) - 1

    @property
    def n_free_params(self) -> int:
        """Coefficient count once ``P(0) = 1`` is fixed."""
        return 2 * self.order + 1

    def _raw(self):
        P = shifted_to_raw(self.num, self.center, self.scale)
        Q = shifted_to_raw(self.den, self.center, self.scale)
        if self.origin_value is not None:
            P[0] = self.origin_value
        if not P[0] > 0:
            raise PositivityError("P(0) must be positive to normalize P(0) = 1")
        return P / P[0], Q / P[0]

    @property
    def p(self) -> np.ndarray:
        return self._raw()[0][1:]

    @property
    def q(self) -> np.ndarray:
        return self._raw()[1]

    def _u(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def numerator(self, x):
        return npoly.polyval(self._u(x), self.num)

    def denominator(self, x):
        return npoly.polyval(self._u(x), self.den)

    def pdf(self, x):
        P, Q = self.numerator(x), self.denominator(x)
        if np.any(Q <= 0):
            raise PositivityError("denominator Q is nonpositive at an evaluation point")
        return np.maximum(P, 0.0) * self.theta.pdf(x) / Q

    def logpdf(self, x):
        P, Q = self.numerator(x), self.denominator(x)
        if np.any(Q <= 0):
            raise PositivityError("denominator Q is nonpositive at an evaluation point")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), -np.inf) \
                + self.theta.logpdf(x) - np.log(Q)


@dataclass(frozen=True)
class GridDensity(Density):
    """Density tabulated on a grid, normalized at construction, linear in between."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError("values must match the grid")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("grid density values must be finite and nonnegative")
        mass = integrate(GridFunction(self.grid, v))
        if not mass > 0:
            raise ValueError("grid density has zero mass")
        object.__setattr__(self, "values", v / mass)

    def pdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid.nodes, self.values,
                         left=0.0, right=0.0)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.grid, self.values)
