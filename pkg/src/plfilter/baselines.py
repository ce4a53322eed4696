"""Scalar Kalman filter and sampling-importance-resampling particle filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import Density
from .errors import DegeneracyError

__all__ = [
    "KalmanState",
    "ParticleEnsemble",
    "kalman_predict",
    "kalman_correct",
    "kalman_step",
    "riccati_fixed_point",
    "systematic_resample",
    "pf_weight",
    "pf_propagate",
    "pf_step",
    "weighted_mean",
    "effective_sample_size",
]


@dataclass(frozen=True)
class KalmanState:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted particles; weights are normalized at construction."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.ndim != 1 or w.shape != x.shape:
            raise ValueError("positions and weights must be vectors of equal length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if not total > 0:
            raise DegeneracyError("all particle weights are zero")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "weights", w / total)

    @classmethod
    def uniform(cls, positions) -> "ParticleEnsemble":
        x = np.asarray(positions, dtype=float)
        return cls(x, np.full(len(x), 1.0 / len(x)))

    def __len__(self) -> int:
        return len(self.positions)


def kalman_correct(state: KalmanState, y: float, h: float, r_var: float,
                   r_mean: float = 0.0) -> KalmanState:
    """Condition on ``y = h x + v`` with ``v ~ N(r_mean, r_var)``."""
    s = h * h * state.variance + r_var
    gain = state.variance * h / s
    return KalmanState(state.mean + gain * (y - h * state.mean - r_mean),
                       (1.0 - gain * h) * state.variance)


def kalman_predict(state: KalmanState, f: float, drift: float, q_var: float) -> KalmanState:
    """Propagate through ``x' = f x + drift + w`` with ``w ~ N(0, q_var)``."""
    return KalmanState(f * state.mean + drift, f * f * state.variance + q_var)


def kalman_step(state: KalmanState, y: float, f: float, h: float, drift: float,
                q_var: float, r_var: float) -> KalmanState:
    """Predict from the previous posterior, then correct with ``y``.

    Args:
        state: Posterior at the previous step.
        y: New observation.
        f: State gain.
        h: Observation gain.
        drift: Known additive input.
        q_var: Process noise variance.
        r_var: Observation noise variance.

    Returns:
        The posterior after observing ``y``.
    """
    if not (q_var > 0 and r_var > 0):
        raise ValueError("noise variances must be positive")
    return kalman_correct(kalman_predict(state, f, drift, q_var), y, h, r_var)


def riccati_fixed_point(f: float, h: float, q_var: float, r_var: float) -> float:
    """Stationary posterior variance of the scalar predict-correct recursion.

    The predicted variance ``p`` solves ``p = f^2 p r / (h^2 p + r) + q``; the
    positive root of ``h^2 p^2 + (r (1 - f^2) - q h^2) p - q r = 0`` is mapped to
    the posterior variance ``p r / (h^2 p + r)``.
    """
    a = h * h
    b = r_var * (1.0 - f * f) - q_var * h * h
    c = -q_var * r_var
    p = (-b + np.sqrt(b * b - 4 * a * c)) / (2 * a)
    return p * r_var / (h * h * p + r_var)


def weighted_mean(ens: ParticleEnsemble) -> float:
    return float(ens.weights @ ens.positions)


def effective_sample_size(ens: ParticleEnsemble) -> float:
    return float(1.0 / np.sum(ens.weights**2))


def systematic_resample(ens: ParticleEnsemble, rng: np.random.Generator) -> ParticleEnsemble:
    """Systematic resampling: one uniform offset, ``N`` evenly spaced pointers."""
    n = len(ens)
    pointers = (rng.uniform() + np.arange(n)) / n
    cdf = np.cumsum(ens.weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, pointers, side="right")
    return ParticleEnsemble.uniform(ens.positions[idx])


def pf_propagate(ens: ParticleEnsemble, f: float, drift: float, eta: Density,
                 rng: np.random.Generator) -> ParticleEnsemble:
    """Move each particle through ``x' = f x + drift + eta``."""
    moved = f * ens.positions + drift + eta.sample(rng, len(ens))
    return ParticleEnsemble(moved, ens.weights)


def pf_weight(ens: ParticleEnsemble, y: float, h: float, eps: Density) -> ParticleEnsemble:
    """Reweight by the likelihood ``eps(y - h x)``.

    Raises:
        DegeneracyError: If every particle has zero likelihood.
    """
    logw = np.log(ens.weights) + eps.logpdf(y - h * ens.positions)
    peak = np.max(logw)
    if not np.isfinite(peak):
        raise DegeneracyError(f"observation {y} has zero likelihood at every particle")
    return ParticleEnsemble(ens.positions, np.exp(logw - peak))


def pf_step(ens: ParticleEnsemble, y: float, f: float, h: float, drift: float,
            eta: Density, eps: Density, rng: np.random.Generator,
            resample: str = "always", ess_fraction: float = 0.5):
    """One SIR cycle: propagate, weight by ``y``, then resample.

    Resampling happens every step by default; ``resample="ess"`` resamples
    only when the effective sample size drops below ``ess_fraction * N``.

    Returns:
        ``(weighted, resampled)``: the weighted ensemble, whose weighted mean is
        the filtering estimate, and the ensemble carried to the next step.
    """
    if resample not in ("always", "ess"):
        raise ValueError(f"unknown resampling schedule {resample!r}")
    weighted = pf_weight(pf_propagate(ens, f, drift, eta, rng), y, h, eps)
    if resample == "always" or effective_sample_size(weighted) < ess_fraction * len(weighted):
        return weighted, systematic_resample(weighted, rng)
    return weighted, weighted
