"""Uniform grids, composite Simpson integration and direct grid convolution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GridSpec",
    "GridFunction",
    "integrate",
    "convolution_matrix",
    "convolve_on_grid",
    "EXAMPLE_GRID",
    "LOCALIZATION_GRID",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of ``n`` nodes on ``[lo, hi]``.

    Attributes:
        lo: Left end point.
        hi: Right end point.
        n: Number of nodes, at least 2.
    """

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo >= self.hi:
            raise ValueError(f"grid bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs at least 2 nodes, got {self.n}")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights: composite Simpson for odd ``n``, trapezoid otherwise."""
        return _weights(self.lo, self.hi, self.n)

    def extended(self, fraction: float = 0.25) -> "GridSpec":
        """Grid widened by ``fraction`` of its length on each side at the same spacing.

        Node count is rounded up to keep the spacing no coarser than the original.
        """
        pad = fraction * (self.hi - self.lo)
        n = int(np.ceil((self.hi - self.lo + 2 * pad) / self.h)) + 1
        if n % 2 == 0:
            n += 1
        return GridSpec(self.lo - pad, self.hi + pad, n)


def _weights(lo: float, hi: float, n: int) -> np.ndarray:
    h = (hi - lo) / (n - 1)
    if n % 2 == 1 and n >= 3:
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * (h / 3.0)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    return w


@dataclass(frozen=True)
class GridFunction:
    """Values tabulated on a :class:`GridSpec`."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes


def integrate(f: GridFunction) -> float:
    """Integrate a tabulated function over its grid.

    Uses composite Simpson when the node count is odd and the trapezoid rule
    otherwise. The result is linear in ``f.values``.
    """
    return float(f.grid.weights @ f.values)


def convolution_matrix(src: GridSpec, kernel: Callable[[np.ndarray], np.ndarray],
                       out: GridSpec) -> np.ndarray:
    """Matrix ``K`` with ``(K @ a)[i] = sum_j w_j a_j kernel(out_i - src_j)``.

    Precomputing ``K`` lets repeated time updates with the same noise density
    reuse the O(n^2) kernel evaluations.
    """
    diff = out.nodes[:, None] - src.nodes[None, :]
    return kernel(diff) * src.weights[None, :]


def convolve_on_grid(a: GridFunction, b: Callable[[np.ndarray], np.ndarray],
                     out: GridSpec) -> GridFunction:
    """Direct quadrature of ``(a * b)(x) = integral a(e) b(x - e) de`` at each output node.

    Args:
        a: Tabulated density.
        b: Vectorized callable evaluating the second density anywhere.
        out: Grid of output nodes.

    Returns:
        The convolution tabulated on ``out``.
    """
    return GridFunction(out, convolution_matrix(a.grid, b, out) @ a.values)


EXAMPLE_GRID = GridSpec(-20.0, 20.0, 2001)
LOCALIZATION_GRID = GridSpec(-15.0, 10.0, 2001)
