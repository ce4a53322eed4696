"""Convex dual fit of the rational surrogate ``P theta / Q`` to moment targets.

The objective, in canonical coordinates with ``P(0) = 1``, is

    J(p, q) = sum_k sigma_k q_k - sum_k xi_k p_k + int P theta log(P theta / Q) - int P theta

with ``sigma_0 = 1``. Its gradient with respect to ``q_k`` is the k-th power
moment residual and with respect to ``p_k`` the k-th generalized logarithmic
moment residual, so a stationary point matches both moment vectors.

Internally the minimization runs in a basis adapted to the reference density
``theta = N(m, s^2)``. With ``u = (x - m) / s`` and ``phi_k = He_k(u) / sqrt(k!)``,

    Q = sum_k b_k phi_k(u),      P = R(x) + sum_k a_k (x / l) phi_{k-1}(u),

where ``R = (1 + u^2)^n`` and ``l = sqrt(m^2 + s^2)``. The ``a`` terms vanish at
the origin, so ``P(0)`` is pinned at ``R(0)``; the objective is invariant under
a common rescaling of ``P`` and ``Q`` up to that constant factor. This basis
keeps the Hessian well conditioned even when ``theta`` is narrow and far from
the origin, where monomials cancel catastrophically.

The minimizer is a projected Levenberg-Marquardt Newton method. A step that
would leave the feasible set is projected, in the metric of the damped Hessian,
onto the linearized positivity constraints, and an Armijo backtracking search
ensures monotone decrease.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from math import factorial

import numpy as np
import numpy.polynomial.hermite_e as herme
from numpy.polynomial import polynomial as npoly
from scipy.optimize import nnls

from .densities import LOG_FLOOR, Density, Gaussian, RationalSurrogate, shifted_to_raw
from .errors import ConvergenceError, DomainError, FeasibilityError
from .moments import hankel_psd_check
from .quadrature import EXAMPLE_GRID, GridSpec

log = logging.getLogger(__name__)

__all__ = [
    "SolverOptions",
    "SolveInfo",
    "SurrogateParams",
    "objective",
    "gradient",
    "moment_map",
    "solve",
    "solve_power_only",
]


@dataclass(frozen=True)
class SolverOptions:
    """Settings for :func:`solve`.

    Attributes:
        max_iters: Newton iteration cap.
        grad_tol: Stationarity tolerance on the inf-norm of the gradient with
            respect to the canonical coefficients, which is the vector of moment
            residuals together with the mass defect. When no further decrease
            is representable in floating point, the fit still counts as
            converged if every residual is within ``grad_tol * max(1, |target|)``.
        armijo_slope: Sufficient-decrease fraction of the directional derivative.
        backtrack: Step shrink ratio in the line search.
        positivity_grid: Nodes where ``P`` and ``Q`` must stay positive. ``None``
            extends the quadrature grid by ``positivity_extension`` on each side.
        positivity_extension: Relative extension used when ``positivity_grid`` is None.
        boundary_fraction: A projected step may shrink ``P`` or ``Q`` at a node to
            at most this fraction of its current value.
        decrement_tol: A point whose projected Newton decrement falls below this
            (relative to ``max(1, |J|)``) is accepted as a constrained minimizer.
        stall_window: Iterations over which progress along the boundary is measured.
        stall_tol: If a projected iteration occurred and the objective fell by less
            than this (relative) over ``stall_window`` iterations, the iterate is
            accepted as a constrained minimizer.
    """

    max_iters: int = 500
    grad_tol: float = 1e-6
    armijo_slope: float = 1e-4
    backtrack: float = 0.5
    positivity_grid: GridSpec | None = None
    positivity_extension: float = 0.25
    boundary_fraction: float = 0.5
    decrement_tol: float = 1e-14
    stall_window: int = 10
    stall_tol: float = 1e-9

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.grad_tol > 0 and self.armijo_slope > 0 and self.decrement_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack ratio must lie in (0, 1)")
        if not 0 < self.boundary_fraction < 1:
            raise ValueError("boundary_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class SolveInfo:
    """Diagnostics of one fit.

    ``status`` is ``"converged"`` when the gradient met ``grad_tol`` and
    ``"boundary"`` when the iteration stopped at a point where the projected
    Newton decrement vanished with a positivity constraint active. In the latter
    case the moment targets lie outside what the rational family can reach and
    the residuals below quantify the mismatch.
    """

    status: str
    iterations: int
    objective: float
    grad_norm: float
    sigma_residual: np.ndarray
    xi_residual: np.ndarray
    mass: float
    elapsed: float


@dataclass(frozen=True)
class SurrogateParams:
    """Canonical coefficients of a fitted surrogate.

    Attributes:
        p: ``p_1..p_2n`` of ``P = 1 + sum p_k x^k``.
        q: ``q_0..q_2n`` of ``Q``.
        theta: Reference density.
        density: Evaluator for ``P theta / Q``. Built from ``p`` and ``q`` when
            omitted; the solver supplies a numerically stable shifted form.
        info: Solver diagnostics, if produced by a fit.
    """

    p: np.ndarray
    q: np.ndarray
    theta: Density
    density: RationalSurrogate | None = field(default=None, repr=False, compare=False)
    info: SolveInfo | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.ndim != 1 or q.shape != (len(p) + 1,) or len(p) % 2:
            raise ValueError("need p of even length 2n and q of length 2n+1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if self.density is None:
            object.__setattr__(self, "density", RationalSurrogate.from_raw(p, q, self.theta))

    @property
    def order(self) -> int:
        return len(self.p)

    @property
    def n_free_params(self) -> int:
        return 2 * self.order + 1

    def pdf(self, x):
        return self.density.pdf(x)


def _positive_values(params: SurrogateParams, x: np.ndarray):
    d = params.density
    scale = d.numerator(0.0)
    P = d.numerator(x) / scale
    Q = d.denominator(x) / scale
    if not (scale > 0 and np.all(P > 0) and np.all(Q > 0)):
        raise DomainError("P and Q must be positive on the grid")
    return P, Q


def _check_order(params: SurrogateParams, sigma, xi):
    sigma = np.asarray(sigma, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if sigma.shape != (params.order,) or xi.shape != (params.order,):
        raise ValueError("sigma and xi must have 2n entries")
    return sigma, xi


def objective(params: SurrogateParams, sigma, xi, grid: GridSpec = EXAMPLE_GRID) -> float:
    """Dual objective ``J(p, q)`` by quadrature on ``grid``.

    Raises:
        DomainError: If ``P`` or ``Q`` is nonpositive at a node.
    """
    sigma, xi = _check_order(params, sigma, xi)
    x, w = grid.nodes, grid.weights
    P, Q = _positive_values(params, x)
    lt = np.maximum(params.theta.logpdf(x), LOG_FLOOR)
    th = np.exp(lt)
    lin = params.q[0] + sigma @ params.q[1:] - xi @ params.p
    return float(lin + np.sum(w * th * P * (np.log(P) + lt - np.log(Q) - 1.0)))


def gradient(params: SurrogateParams, sigma, xi, grid: GridSpec = EXAMPLE_GRID):
    """Analytic gradient ``(dJ/dp_1..2n, dJ/dq_0..2n)``."""
    sigma, xi = _check_order(params, sigma, xi)
    x, w = grid.nodes, grid.weights
    P, Q = _positive_values(params, x)
    lt = np.maximum(params.theta.logpdf(x), LOG_FLOOR)
    th = np.exp(lt)
    V = x[:, None] ** np.arange(params.order + 1)
    gp = -xi + (w * th * (np.log(P) + lt - np.log(Q))) @ V[:, 1:]
    gq = np.concatenate([[1.0], sigma]) - (w * th * P / Q) @ V
    return gp, gq


def moment_map(params: SurrogateParams, grid: GridSpec = EXAMPLE_GRID):
    """Power and generalized log moments ``(sigma_1..2n, xi_1..2n)`` of ``P theta / Q``."""
    x, w = grid.nodes, grid.weights
    P, Q = _positive_values(params, x)
    lt = np.maximum(params.theta.logpdf(x), LOG_FLOOR)
    th = np.exp(lt)
    V = x[:, None] ** np.arange(1, params.order + 1)
    sigma = (w * th * P / Q) @ V
    xi = (w * th * (np.log(P) + lt - np.log(Q))) @ V
    return sigma, xi


def _theta_location(theta: Density, grid: GridSpec) -> tuple[float, float]:
    if isinstance(theta, Gaussian):
        return theta.mu, float(np.sqrt(theta.var))
    x, w = grid.nodes, grid.weights
    th = theta.pdf(x)
    mass = w @ th
    m = (w * th) @ x / mass
    v = (w * th) @ (x - m) ** 2 / mass
    return float(m), float(np.sqrt(v))


def _phi(u: np.ndarray, deg: int) -> np.ndarray:
    norms = np.sqrt([float(factorial(k)) for k in range(deg + 1)])
    return herme.hermevander(u, deg) / norms


def _raw_coefficients(basis_u: list[np.ndarray], m: float, s: float, size: int) -> np.ndarray:
    """Rows of monomial coefficients in ``x`` for polynomials given in powers of ``u``."""
    out = np.zeros((len(basis_u), size))
    for i, c in enumerate(basis_u):
        padded = np.zeros(size)
        padded[: len(c)] = c
        out[i] = shifted_to_raw(padded, m, s)
    return out


class _Problem:
    """Objective, gradient and Hessian in the internal basis."""

    def __init__(self, sigma, xi, theta, two_n, grid, pos_nodes, power_only):
        self.two_n = two_n
        self.power_only = power_only
        n = two_n // 2
        m, s = _theta_location(theta, grid)
        ell = np.hypot(m, s)
        self.m, self.s, self.ell = m, s, ell

        x = grid.nodes
        self.x = x
        lt = np.maximum(theta.logpdf(x), LOG_FLOOR)
        self.lt = lt
        self.c = grid.weights * np.exp(lt)

        # u-power coefficients of phi_k, psi_k (times ell) and R
        phi_u = [herme.herme2poly(np.eye(two_n + 1)[k]) / np.sqrt(float(factorial(k)))
                 for k in range(two_n + 1)]
        psi_u = [npoly_mulx(phi_u[k - 1], m, s) for k in range(1, two_n + 1)]
        r_u = np.array([1.0])
        for _ in range(n):
            r_u = np.convolve(r_u, [1.0, 0.0, 1.0])
        self.phi_u, self.psi_u, self.r_u = phi_u, psi_u, r_u

        def design(xv):
            u = (xv - m) / s
            Phi = _phi(u, two_n)
            Psi = (xv / ell)[:, None] * Phi[:, :-1]
            R = (1.0 + u * u) ** n
            return Phi, Psi, R

        self.Phi, self.Psi, self.R = design(x)
        self.Phi_e, self.Psi_e, self.R_e = design(pos_nodes)
        if power_only:
            self.R = np.ones_like(x)
            self.R_e = np.ones_like(pos_nodes)

        Cphi = _raw_coefficients(phi_u, m, s, two_n + 1)
        Cpsi = _raw_coefficients([c / ell for c in psi_u], m, s, two_n + 1)
        self.sigma, self.xi = sigma, xi
        self.s_t = Cphi @ np.concatenate([[1.0], sigma])
        self.xi_t = Cpsi[:, 1:] @ xi
        # linear term of the fixed part R, so that the objective equals R(0) J exactly
        r_raw = _raw_coefficients([r_u], m, s, two_n + 1)[0]
        self.offset = 0.0 if power_only else -float(xi @ r_raw[1:])
        self.na = 0 if power_only else two_n
        # P(0); the internal objective is this multiple of the canonical one
        self.R0 = 1.0 if power_only else (1.0 + (m / s) ** 2) ** n

    def split(self, z):
        return z[: self.na], z[self.na:]

    def values(self, z, extended=False):
        a, b = self.split(z)
        if extended:
            P = self.R_e + (self.Psi_e @ a if self.na else 0.0)
            return P, self.Phi_e @ b
        P = self.R + (self.Psi @ a if self.na else 0.0)
        return P, self.Phi @ b

    def feasible(self, z):
        P, Q = self.values(z, extended=True)
        return P.min() > 0 and Q.min() > 0 and z[-1] >= 0

    def objective(self, z):
        a, b = self.split(z)
        P, Q = self.values(z)
        val = self.offset + self.s_t @ b - (self.xi_t @ a if self.na else 0.0)
        return float(val + np.sum(self.c * P * (np.log(P) + self.lt - np.log(Q) - 1.0)))

    def grad(self, z):
        P, Q = self.values(z)
        gb = self.s_t - self.Phi.T @ (self.c * P / Q)
        if not self.na:
            return gb
        ga = -self.xi_t + self.Psi.T @ (self.c * (np.log(P) + self.lt - np.log(Q)))
        return np.concatenate([ga, gb])

    def hess(self, z):
        P, Q = self.values(z)
        Hbb = (self.Phi * (self.c * P / Q**2)[:, None]).T @ self.Phi
        if not self.na:
            return Hbb
        Haa = (self.Psi * (self.c / P)[:, None]).T @ self.Psi
        Hab = -(self.Psi * (self.c / Q)[:, None]).T @ self.Phi
        return np.block([[Haa, Hab], [Hab.T, Hbb]])

    def start(self):
        if self.power_only:
            b = np.zeros(self.two_n + 1)
            b[0] = 1.0
            return b
        # Q = R so that P theta / Q = theta
        b = herme.poly2herme(self.r_u) * np.sqrt([float(factorial(k)) for k in range(self.two_n + 1)])
        return np.concatenate([np.zeros(self.two_n), b])

    def coordinates(self, params: SurrogateParams) -> np.ndarray:
        """Internal coordinates of given canonical coefficients, rescaled so that ``P(0) = R(0)``."""
        x = self.x
        P = self.R0 * npoly.polyval(x, np.concatenate([[1.0], params.p]))
        Q = self.R0 * npoly.polyval(x, params.q)
        b = np.linalg.lstsq(self.Phi, Q, rcond=None)[0]
        if not self.na:
            return b
        a = np.linalg.lstsq(self.Psi, P - self.R, rcond=None)[0]
        return np.concatenate([a, b])

    def constraint_rows(self, z):
        """Linear constraint rows ``A`` and current values ``v = A z`` for ``P``, ``Q`` and the lead.

        A step ``d`` keeps every constraint above ``tau`` times its current value
        when ``A d >= (tau - 1) v``.
        """
        P, Q = self.values(z, extended=True)
        nb = self.two_n + 1
        blocks = [np.hstack([np.zeros((len(Q), self.na)), self.Phi_e])]
        vals = [Q]
        if self.na:
            blocks.insert(0, np.hstack([self.Psi_e, np.zeros((len(P), nb))]))
            # the fixed R part does not move with d, so only Psi a changes P
            vals.insert(0, P)
        lead = np.zeros((1, len(z)))
        lead[0, -1] = 1.0
        return np.vstack(blocks + [lead]), np.concatenate(vals + [[z[-1]]])

    def moments(self, z, x):
        """Power and log moments of the current density, and its mass."""
        P, Q = self.values(z)
        V = x[:, None] ** np.arange(self.two_n + 1)
        dens = self.c * P / Q
        lr = self.c * (np.log(P) + self.lt - np.log(Q))
        return dens @ V[:, 1:], lr @ V[:, 1:], float(dens.sum())

    def stationarity(self, z, scaled=False) -> float:
        """Inf-norm of the canonical gradient, i.e. of the moment residuals.

        With ``scaled`` each residual is divided by ``max(1, |target|)``.
        """
        sig, xi, mass = self.moments(z, self.x)
        res = [np.array([1.0 - mass]), sig - self.sigma]
        ref = [np.ones(1), self.sigma]
        if self.na:
            res.append(xi - self.xi)
            ref.append(self.xi)
        res, ref = np.abs(np.concatenate(res)), np.concatenate(ref)
        if scaled:
            res = res / np.maximum(1.0, np.abs(ref))
        return float(res.max())

    def surrogate(self, z, theta) -> SurrogateParams:
        a, b = self.split(z)
        size = self.two_n + 1
        num = np.zeros(size)
        if self.power_only:
            num[0] = 1.0
        else:
            num[: len(self.r_u)] += self.r_u
            for k in range(self.two_n):
                c = self.psi_u[k] / self.ell
                num[: len(c)] += a[k] * c
        den = np.zeros(size)
        for k in range(size):
            den[: len(self.phi_u[k])] += b[k] * self.phi_u[k]
        num, den, factor = _cancel_common_roots(num, den)
        # P(0) = R(0) exactly, because every a-term carries a factor x
        origin = self.R0 / npoly.polyval(-self.m / self.s, factor)
        dens = RationalSurrogate(num, den, theta, center=self.m, scale=self.s,
                                 origin_value=origin)
        return SurrogateParams(dens.p, dens.q, theta, density=dens)


def _cancel_common_roots(num: np.ndarray, den: np.ndarray, tol: float = 1e-8):
    """Divide out roots shared by both polynomials (coefficients lowest degree first).

    Only nonreal roots are cancelled: a conjugate pair forms a factor that is
    positive on the real line, so dividing it out leaves ``P theta / Q`` and the
    signs of ``P`` and ``Q`` unchanged. Roots count as shared when they agree to
    ``tol`` relative to their size.

    Returns:
        The reduced numerator and denominator and the factor that was removed.
    """
    rp = list(npoly.polyroots(np.trim_zeros(num, "b"))) if np.count_nonzero(num) > 1 else []
    rq = list(npoly.polyroots(np.trim_zeros(den, "b"))) if np.count_nonzero(den) > 1 else []
    common = []
    for r in [r for r in rp if r.imag > tol * max(1.0, abs(r))]:
        match = [i for i, t in enumerate(rq) if abs(r - t) <= tol * max(1.0, abs(r))]
        if match:
            common.extend([r, np.conj(r)])
            rq.pop(match[0])
    unchanged = num, den, np.ones(1)
    if not common:
        return unchanged
    factor = npoly.polyfromroots(common)
    if np.abs(factor.imag).max() > tol:
        return unchanged
    factor = factor.real
    size = len(num)
    reduced = []
    for c in (num, den):
        quo, rem = npoly.polydiv(np.trim_zeros(c, "b"), factor)
        if np.abs(rem).max() > tol * np.abs(c).max():
            return unchanged
        out = np.zeros(size)
        out[: len(quo)] = quo
        reduced.append(out)
    return reduced[0], reduced[1], factor


def npoly_mulx(c: np.ndarray, m: float, s: float) -> np.ndarray:
    """u-power coefficients of ``x * f(u)`` where ``x = m + s u``."""
    out = np.zeros(len(c) + 1)
    out[: len(c)] += m * c
    out[1:] += s * c
    return out


def _ldp(G: np.ndarray, h: np.ndarray):
    """Least-distance point ``argmin |x|`` subject to ``G x >= h``, or None if infeasible."""
    nvar = G.shape[1]
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(nvar + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * max(G.shape[0], 10))
    r = E @ u - f
    if abs(r[-1]) < 1e-14:
        return None
    return -r[:nvar] / r[-1]


def _project(A: np.ndarray, rhs: np.ndarray, e0: np.ndarray, max_rounds: int = 60):
    """Closest point to ``e0`` satisfying ``A e >= rhs``, activating violated rows lazily."""
    active = np.zeros(len(rhs), dtype=bool)
    shift = np.zeros_like(e0)
    target = rhs - A @ e0
    for _ in range(max_rounds):
        viol = (A @ shift < target - 1e-12) & ~active
        if not viol.any():
            return e0 + shift
        active |= viol
        shift = _ldp(A[active], target[active])
        if shift is None:
            return None
    return None


def _minimize(prob: _Problem, z: np.ndarray, opts: SolverOptions):
    J, g = prob.objective(z), prob.grad(z)
    lam = 1e-6
    tau = opts.boundary_fraction
    history: list[tuple[float, bool]] = []
    for it in range(opts.max_iters):
        if prob.stationarity(z) <= opts.grad_tol:
            return z, it, J, g, "converged"
        H = prob.hess(z)
        H = 0.5 * (H + H.T)
        Hl = H + lam * max(1.0, np.abs(np.diag(H)).max()) * np.eye(len(z))
        try:
            L = np.linalg.cholesky(Hl)
        except np.linalg.LinAlgError:
            lam *= 10
            if lam > 1e8:
                break
            continue
        d = -np.linalg.solve(Hl, g)
        projected = False
        if not prob.feasible(z + d):
            # solve the projection in whitened coordinates e = L' d
            A, vals = prob.constraint_rows(z)
            rhs = (tau - 1.0) * vals
            Linv_t = np.linalg.inv(L.T)
            Ae = A @ Linv_t
            norms = np.linalg.norm(Ae, axis=1)
            keep = norms > 0
            Ae = Ae[keep] / norms[keep, None]
            rhs = rhs[keep] / norms[keep]
            e = _project(Ae, rhs, L.T @ d)
            if e is None or g @ (Linv_t @ e) >= 0:
                # an inaccurate projection of a very long step; damp and retry
                lam *= 10
                if lam > 1e8:
                    break
                continue
            d = Linv_t @ e
            projected = True
            # ratio test: never shrink a constraint below tau times its value;
            # rows sitting at zero are left to the feasibility check
            Ad = A @ d
            shrinking = (Ad < 0) & (vals > 0)
            if shrinking.any():
                d = d * min(1.0, float(np.min((tau - 1.0) * vals[shrinking] / Ad[shrinking])))
        slope = g @ d
        if -slope < opts.decrement_tol * max(1.0, abs(J)):
            # no further decrease is representable in floating point
            done = prob.stationarity(z, scaled=True) <= opts.grad_tol
            return z, it, J, g, "converged" if done else "boundary"
        step = 1.0
        while step > 1e-12:
            zn = z + step * d
            if prob.feasible(zn):
                Jn = prob.objective(zn)
                if Jn <= J + opts.armijo_slope * step * slope:
                    break
            step *= opts.backtrack
        else:
            lam *= 10
            if lam > 1e8:
                break
            continue
        z, J, g = zn, Jn, prob.grad(zn)
        history.append((J, projected))
        if len(history) > opts.stall_window:
            J_old = history[-opts.stall_window - 1][0]
            recent = history[-opts.stall_window:]
            if J_old - J <= opts.stall_tol * max(1.0, abs(J)) and any(p for _, p in recent):
                return z, it + 1, J, g, "boundary"
        log.debug("iter %d J=%.12g |g|=%.3e step=%.3g lam=%.1e projected=%s",
                  it, J, np.abs(g).max(), step, lam, projected)
        if step == 1.0:
            lam = max(lam / 10, 1e-12)
    status = "stalled" if lam > 1e8 else "max_iters"
    return z, opts.max_iters, J, g, status


def _positivity_nodes(grid: GridSpec, opts: SolverOptions) -> np.ndarray:
    ext = opts.positivity_grid or grid.extended(opts.positivity_extension)
    return np.unique(np.concatenate([ext.nodes, grid.nodes]))


def _fit(sigma, xi, theta, two_n, opts, grid, power_only, init=None):
    opts = opts or SolverOptions()
    sigma = np.asarray(sigma, dtype=float)
    if two_n is None:
        two_n = len(sigma)
    if two_n < 2 or two_n % 2 or sigma.shape != (two_n,):
        raise ValueError("sigma must hold 2n moments for an even order 2n >= 2")
    if not hankel_psd_check(sigma):
        raise FeasibilityError("power moments do not form a positive definite Hankel matrix")
    if xi is None:
        xi = np.zeros(two_n)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (two_n,) or not np.all(np.isfinite(xi)):
        raise ValueError("xi must hold 2n finite values")

    t0 = time.perf_counter()
    prob = _Problem(sigma, xi, theta, two_n, grid, _positivity_nodes(grid, opts), power_only)
    z0 = prob.start()
    if init is not None:
        if init.order != two_n:
            raise ValueError("initial point has the wrong order")
        z0 = prob.coordinates(init)
        if not prob.feasible(z0):
            raise DomainError("initial point violates positivity on the positivity grid")
    z, iters, _, g, status = _minimize(prob, z0, opts)
    fit = prob.surrogate(z, theta)
    sig_hat, xi_hat, mass = prob.moments(z, grid.nodes)
    sigma_res = sig_hat - sigma
    xi_res = np.zeros(two_n) if power_only else xi_hat - xi
    if status in ("stalled", "max_iters"):
        raise ConvergenceError(
            f"solver stopped ({status}) with gradient norm {prob.stationarity(z):.3g}",
            params=fit, residuals=np.concatenate([sigma_res, xi_res]), iterations=iters)
    info = SolveInfo(status=status, iterations=iters,
                     objective=prob.objective(z) / prob.R0,
                     grad_norm=prob.stationarity(z), sigma_residual=sigma_res,
                     xi_residual=xi_res, mass=mass, elapsed=time.perf_counter() - t0)
    return SurrogateParams(fit.p, fit.q, theta, density=fit.density, info=info)


def solve(sigma, xi, theta: Density, two_n: int | None = None,
          opts: SolverOptions | None = None, grid: GridSpec = EXAMPLE_GRID,
          init: SurrogateParams | None = None) -> SurrogateParams:
    """Fit ``P theta / Q`` matching power moments ``sigma`` and log moments ``xi``.

    Args:
        sigma: ``sigma_1..sigma_2n``.
        xi: ``xi_1..xi_2n`` relative to ``theta``.
        theta: Reference density.
        two_n: Order ``2n``; defaults to ``len(sigma)``.
        opts: Solver settings.
        grid: Quadrature grid.
        init: Starting point; by default the iteration starts from ``P theta / Q = theta``.

    Returns:
        The fitted parameters, with diagnostics in ``info``.

    Raises:
        FeasibilityError: If ``sigma`` is not a valid moment sequence.
        ConvergenceError: If the iteration cap is reached or the line search stalls.
    """
    return _fit(sigma, xi, theta, two_n, opts, grid, power_only=False, init=init)


def solve_power_only(sigma, theta: Density, two_n: int | None = None,
                     opts: SolverOptions | None = None, grid: GridSpec = EXAMPLE_GRID,
                     init: SurrogateParams | None = None) -> SurrogateParams:
    """Fit ``theta / Q`` matching power moments only, with ``P`` fixed to 1."""
    if init is not None and np.any(init.p != 0):
        raise ValueError("a power-only fit needs an initial point with p = 0")
    return _fit(sigma, None, theta, two_n, opts, grid, power_only=True, init=init)
