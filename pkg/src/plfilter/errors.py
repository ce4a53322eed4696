"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class PLFilterError(Exception):
    """Base class for all package errors."""


class PositivityError(PLFilterError, ValueError):
    """A polynomial that must stay positive is nonpositive somewhere."""


class CapabilityError(PLFilterError, NotImplementedError):
    """The requested operation is not available for this density family."""


class FeasibilityError(PLFilterError, ValueError):
    """Target moments fail the Hankel positive-definiteness test."""


class DomainError(PLFilterError, ValueError):
    """Parameters lie outside the domain of the dual objective."""


class DegenerateLikelihoodError(PLFilterError, ArithmeticError):
    """The Bayes normalizer vanished on the grid."""


class ModelError(PLFilterError, ValueError):
    """Invalid system model (for example a zero state gain)."""


class DegeneracyError(PLFilterError, ArithmeticError):
    """All particle weights collapsed to zero."""


class ConvergenceError(PLFilterError, RuntimeError):
    """The optimizer hit its iteration cap before meeting the gradient tolerance.

    Attributes:
        params: Last accepted iterate (a ``SurrogateParams``).
        residuals: Gradient at the last iterate, i.e. the moment residuals.
        iterations: Number of iterations performed.
    """

    def __init__(self, message: str, params=None, residuals: np.ndarray | None = None,
                 iterations: int = 0):
        super().__init__(message)
        self.params = params
        self.residuals = residuals
        self.iterations = iterations
