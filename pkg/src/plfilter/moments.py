"""Power moments, generalized logarithmic moments and their propagation."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .densities import LOG_FLOOR, Density
from .quadrature import GridFunction, GridSpec

__all__ = [
    "MomentVector",
    "power_moments",
    "grid_power_moments",
    "propagate_power_moments",
    "generalized_log_moments",
    "log_moments_from_log_values",
    "hankel_matrix",
    "hankel_psd_check",
    "standardized_moments",
    "noise_moments",
]


@dataclass(frozen=True)
class MomentVector:
    """Truncated power and generalized logarithmic moments of one density.

    ``sigma[k-1]`` is the k-th power moment and ``xi[k-1]`` the k-th
    generalized logarithmic moment relative to ``theta``; the zeroth entries
    (1 and 0) are implicit.
    """

    sigma: np.ndarray
    xi: np.ndarray
    theta: Density

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if sigma.shape != xi.shape or sigma.ndim != 1 or len(sigma) % 2:
            raise ValueError("sigma and xi must be vectors of the same even length")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "xi", xi)

    @property
    def order(self) -> int:
        return len(self.sigma)


def _powers(x: np.ndarray, two_n: int) -> np.ndarray:
    return x[:, None] ** np.arange(1, two_n + 1)


def grid_power_moments(f: GridFunction, two_n: int) -> np.ndarray:
    """Moments ``integral x^k f(x) dx`` for ``k = 1..two_n`` of a tabulated function."""
    return (f.grid.weights * f.values) @ _powers(f.grid.nodes, two_n)


def power_moments(d: Density, two_n: int, grid: GridSpec) -> np.ndarray:
    """Power moments ``sigma_1..sigma_2n`` of ``d`` by quadrature on ``grid``."""
    return grid_power_moments(GridFunction(grid, d.pdf(grid.nodes)), two_n)


def propagate_power_moments(post, f: float, eta_moments, two_n: int) -> np.ndarray:
    """Power moments of ``f x + eta`` for independent ``x`` and ``eta``.

    Computes ``sigma_k = sum_j C(k, j) f^j E[x^j] E[eta^(k-j)]``.

    Args:
        post: ``E[x^j]`` for ``j = 1..two_n``.
        f: State gain.
        eta_moments: ``E[eta^j]`` for ``j = 1..two_n``, optionally preceded by
            ``E[eta^0] = 1``.
        two_n: Number of moments.

    Returns:
        ``sigma_1..sigma_2n``.
    """
    mx = np.concatenate([[1.0], np.asarray(post, dtype=float)[:two_n]])
    me = np.asarray(eta_moments, dtype=float)
    if len(me) == two_n + 1:
        me = me[1:]
    me = np.concatenate([[1.0], me[:two_n]])
    out = np.empty(two_n)
    for k in range(1, two_n + 1):
        out[k - 1] = sum(comb(k, j) * f**j * mx[j] * me[k - j] for j in range(k + 1))
    return out


def log_moments_from_log_values(log_rho: np.ndarray, theta: Density, grid: GridSpec,
                                two_n: int) -> np.ndarray:
    """``integral x^k theta(x) log rho(x) dx`` from tabulated ``log rho``, floor-clamped."""
    x = grid.nodes
    th = theta.pdf(x)
    lr = np.maximum(np.asarray(log_rho, dtype=float), LOG_FLOOR)
    return (grid.weights * th * lr) @ _powers(x, two_n)


def generalized_log_moments(rho: GridFunction, theta: Density, two_n: int) -> np.ndarray:
    """Generalized logarithmic moments ``xi_1..xi_2n`` of a tabulated density.

    Values below the floor are clamped before taking the logarithm.
    """
    with np.errstate(divide="ignore"):
        log_rho = np.log(np.maximum(rho.values, 0.0))
    return log_moments_from_log_values(log_rho, theta, rho.grid, two_n)


def hankel_matrix(sigma) -> np.ndarray:
    """``(n+1) x (n+1)`` Hankel matrix of ``(1, sigma_1, ..., sigma_2n)``."""
    s = np.concatenate([[1.0], np.asarray(sigma, dtype=float)])
    if len(s) % 2 == 0:
        raise ValueError("need an even number of moments")
    n = (len(s) - 1) // 2
    i = np.arange(n + 1)
    return s[i[:, None] + i[None, :]]


def standardized_moments(sigma) -> np.ndarray | None:
    """Moments of ``(x - mean) / sd`` from raw moments, or None if the variance is not positive."""
    sigma = np.asarray(sigma, dtype=float)
    var = sigma[1] - sigma[0] ** 2
    if not (np.all(np.isfinite(sigma)) and var > 0):
        return None
    two_n = len(sigma)
    shift = (-sigma[0]) ** np.arange(1, two_n + 1)
    central = propagate_power_moments(sigma, 1.0, shift, two_n)
    return central / np.sqrt(var) ** np.arange(1, two_n + 1)


def hankel_psd_check(sigma, tol: float = 1e-10) -> bool:
    """True iff the moment sequence is strictly positive definite with margin ``tol``.

    Positive definiteness of the Hankel matrix survives any affine change of
    variable but the size of its minors does not, so the minors are taken for
    the standardized moments. A narrow density far from the origin is thereby
    judged like any other.
    """
    sigma = np.asarray(sigma, dtype=float)
    hankel_matrix(sigma)  # validates the length
    z = standardized_moments(sigma)
    if z is None:
        return False
    H = hankel_matrix(z)
    return all(np.linalg.det(H[:k, :k]) > tol for k in range(1, H.shape[0] + 1))


def noise_moments(d: Density, two_n: int, grid: GridSpec | None = None) -> np.ndarray:
    """``E[eta^k]`` for ``k = 1..two_n``: closed form when available, else quadrature."""
    exact = [d.raw_moment(k) for k in range(1, two_n + 1)]
    if all(m is not None for m in exact):
        return np.array(exact, dtype=float)
    if grid is None:
        raise ValueError("a grid is needed for densities without closed-form moments")
    return power_moments(d, two_n, grid)
