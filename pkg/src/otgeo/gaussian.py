"""Closed-form entropy-relaxed transport between 1-D Gaussians.

Cost ``m(x, y) = (x - y)^2``.  The public ``lam`` is the same entropy weight
as in the discrete modules: the plan minimizes
``(<m, P> - lam h(P)) / (1 + lam)`` with ``h`` the differential entropy, and
the Gibbs kernel is ``exp(-(x - y)^2 / lam)``.  Writing that kernel as
``exp(-(x - y)^2 / (2 w^2))`` gives the width ``w = sqrt(lam / 2)``
(:func:`kernel_width`), the other common parameterization.

The optimal plan is a bivariate Gaussian with means ``(mu_p, mu_q)``,
variances ``(sigma_p^2, sigma_q^2)`` and covariance
``rho = lam (sqrt(1 + X) - 1) / 4``, ``X = 16 sigma_p^2 sigma_q^2 / lam^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from .divergence import ScalingFactorRule, scaling_factor
from .errors import NonPositiveVariance
from .simplex import Tolerance
from .sinkhorn import _check_lambda, cuturi_value, sinkhorn_solve

_LOG_8PI2E2 = math.log(8 * math.pi**2 * math.e**2)


@dataclass(frozen=True)
class Gaussian1D:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma2)):
            raise ValueError("Gaussian parameters must be finite")
        if not self.sigma2 > 0:
            raise NonPositiveVariance(f"sigma2 must be > 0, got {self.sigma2!r}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-(x - self.mu) ** 2 / (2 * self.sigma2)) / math.sqrt(2 * math.pi * self.sigma2)


@dataclass(frozen=True)
class GaussianPlanParams:
    """Optimal plan ``N(mu_vec, Sigma)`` and the variances of its scaling functions.

    ``sigma_tilde2`` and ``sigma_tilde_prime2`` parameterize the factors
    ``a(x)`` and ``b(y)`` of ``P = c a(x) b(y) K(x, y)``.  They are negative
    when the factor is an inverted Gaussian (``sigma_q < sigma_p`` at small
    ``lam``) and infinite when it is flat; the plan itself is always proper.
    """

    sigma_tilde2: float
    sigma_tilde_prime2: float
    Sigma: NDArray[np.float64]
    mu_vec: NDArray[np.float64]


def kernel_width(lam: float) -> float:
    """``w`` with ``exp(-(x - y)^2 / lam) = exp(-(x - y)^2 / (2 w^2))``."""
    return math.sqrt(_check_lambda(lam) / 2)


def _root(lam, s2p, s2q):
    # lam * sqrt(1 + X)
    return math.sqrt(lam * lam + 16 * s2p * s2q)


def _plan_covariance(lam, s2p, s2q):
    return 4 * s2p * s2q / (lam + _root(lam, s2p, s2q))


def _scaling_variance(lam, s2_self, s2_other):
    # 2 s^2 lam / (lam (1 + sqrt(1 + X)) - 4 s^2), with the subtraction rewritten
    R = _root(lam, s2_self, s2_other)
    den = lam + (lam * lam + 16 * s2_self * (s2_other - s2_self)) / (R + 4 * s2_self)
    if den == 0.0:
        return math.inf
    return 2 * s2_self * lam / den


def gaussian_plan(p: Gaussian1D, q: Gaussian1D, lam: float) -> GaussianPlanParams:
    lam = _check_lambda(lam)
    rho = _plan_covariance(lam, p.sigma2, q.sigma2)
    Sigma = np.array([[p.sigma2, rho], [rho, q.sigma2]])
    if not (p.sigma2 * q.sigma2 - rho * rho) > 0:
        raise NonPositiveVariance(f"plan covariance is not positive definite at lam={lam!r}")
    return GaussianPlanParams(_scaling_variance(lam, p.sigma2, q.sigma2),
                              _scaling_variance(lam, q.sigma2, p.sigma2),
                              Sigma, np.array([p.mu, q.mu]))


def gaussian_cuturi(p: Gaussian1D, q: Gaussian1D, lam: float) -> float:
    """Closed-form ``C_lam(p, q)``."""
    lam = _check_lambda(lam)
    R = _root(lam, p.sigma2, q.sigma2)
    rho = _plan_covariance(lam, p.sigma2, q.sigma2)
    cost = (p.mu - q.mu) ** 2 + p.sigma2 + q.sigma2 - 2 * rho
    ent = (0.5 * math.log(p.sigma2 * q.sigma2) + 0.5 * _LOG_8PI2E2
           - 0.5 * math.log((lam + R) / lam))
    return (cost - lam * ent) / (1 + lam)


def gaussian_lambda_divergence(p: Gaussian1D, q: Gaussian1D, lam: float,
                               scale: ScalingFactorRule | str = ScalingFactorRule.LAMBDA_OVER_ONE_PLUS_LAMBDA) -> float:
    """Closed-form ``D_lam[p : q] = gamma KL[P*(p, p) : P*(p, q)]``."""
    lam = _check_lambda(lam)
    s2p, s2q = p.sigma2, q.sigma2
    r = _root(lam, s2p, s2q) / lam          # sqrt(1 + X)
    rp = _root(lam, s2p, s2p) / lam         # sqrt(1 + X_p)
    # 1/2 (r - rp) + (1 + r)/4 (s2p/s2q - 1), grouped so the O(1/lam) parts cancel exactly
    spread = (s2q - s2p) * (8 * s2p / (lam * lam * (r + rp)) - (1 + r) / (4 * s2q))
    val = (spread
           + 0.5 * math.log(s2q / s2p)
           + 0.5 * math.log((1 + rp) / (1 + r))
           + (1 + r) / 4 * (p.mu - q.mu) ** 2 / s2q)
    return scaling_factor(lam, scale) * val


def gaussian_kl(p: Gaussian1D, q: Gaussian1D) -> float:
    return 0.5 * ((p.mu - q.mu) ** 2 / q.sigma2 + p.sigma2 / q.sigma2 - 1) + 0.5 * math.log(q.sigma2 / p.sigma2)


def gaussian_divergence_limit(p: Gaussian1D, q: Gaussian1D, which: str) -> float:
    """Limits of the ``lam/(1+lam)``-scaled divergence.

    ``which="infinity"`` gives ``KL[p : q]``; ``which="zero"`` gives
    ``(sigma_p/sigma_q) ((mu_p - mu_q)^2 + (sigma_p - sigma_q)^2)``.
    """
    if which == "infinity":
        return gaussian_kl(p, q)
    if which == "zero":
        ratio = p.sigma / q.sigma
        return ratio * (p.mu - q.mu) ** 2 + ratio * (p.sigma - q.sigma) ** 2
    raise ValueError(f"which must be 'infinity' or 'zero', got {which!r}")


def gaussian_center_limits(q1: Gaussian1D, q2: Gaussian1D) -> tuple[Gaussian1D, Gaussian1D]:
    """Centers of two Gaussians for ``lam -> infinity`` and ``lam -> 0``.

    The first is precision-weighted (harmonic mean of variances), the
    second weights by standard deviations.
    """
    v1, v2 = q1.sigma2, q2.sigma2
    inf_center = Gaussian1D((v2 * q1.mu + v1 * q2.mu) / (v1 + v2), 2 * v1 * v2 / (v1 + v2))
    s1, s2 = q1.sigma, q2.sigma
    zero_center = Gaussian1D((s2 * q1.mu + s1 * q2.mu) / (s1 + s2), (2 * s1 * s2 / (s1 + s2)) ** 2)
    return inf_center, zero_center


def gaussian_center(points: list[Gaussian1D], lam: float, objective: str = "divergence",
                    center_first: bool = True) -> Gaussian1D:
    """Numerically minimize the summed divergence (or Cuturi cost) to ``points``.

    Searches over ``(mu, log sigma)`` with Nelder-Mead from several starts.
    ``center_first`` puts the candidate in the first slot, ``D[p : q_i]``.
    """
    lam = _check_lambda(lam)

    if objective == "divergence":
        def term(c, g):
            return gaussian_lambda_divergence(c, g, lam) if center_first else gaussian_lambda_divergence(g, c, lam)
    elif objective == "cuturi":
        def term(c, g):
            return gaussian_cuturi(c, g, lam) if center_first else gaussian_cuturi(g, c, lam)
    else:
        raise ValueError(f"objective must be 'divergence' or 'cuturi', got {objective!r}")

    def f(x):
        c = Gaussian1D(float(x[0]), float(math.exp(2 * x[1])))
        return sum(term(c, g) for g in points)

    mus = [g.mu for g in points]
    sig = [g.sigma for g in points]
    starts = [(m, math.log(s)) for m in (min(mus), float(np.mean(mus)), max(mus))
              for s in (min(sig), max(sig), max(sig) * max(1.0, math.sqrt(lam)))]
    best = None
    for x0 in starts:
        res = minimize(f, x0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20_000, "maxfev": 40_000})
        if best is None or res.fun < best.fun:
            best = res
    return Gaussian1D(float(best.x[0]), float(math.exp(2 * best.x[1])))


def discretize_pair(p: Gaussian1D, q: Gaussian1D, n_points: int = 200, span: float = 6.0):
    """Shared grid and histogram approximations of ``p`` and ``q``.

    The grid covers ``[min mu - span sigma_max, max mu + span sigma_max]``.
    Returns ``(x, M, p_hist, q_hist, dx)`` with ``M_ij = (x_i - x_j)^2``.
    """
    smax = max(p.sigma, q.sigma)
    x = np.linspace(min(p.mu, q.mu) - span * smax, max(p.mu, q.mu) + span * smax, n_points)
    dx = float(x[1] - x[0])
    ph, qh = p.pdf(x), q.pdf(x)
    return x, (x[:, None] - x[None, :]) ** 2, ph / ph.sum(), qh / qh.sum(), dx


def discretized_cuturi(p: Gaussian1D, q: Gaussian1D, lam: float, n_points: int = 200,
                       tol: Tolerance | None = None) -> float:
    """Sinkhorn estimate of ``C_lam(p, q)`` on a grid.

    The discrete plan entropy is converted to differential entropy by adding
    ``2 log dx`` (cell area ``dx^2``); without it the two differ by a
    grid-dependent constant.
    """
    lam = _check_lambda(lam)
    _, M, ph, qh, dx = discretize_pair(p, q, n_points)
    plan, _ = sinkhorn_solve(M, ph, qh, lam, tol)
    return cuturi_value(M, plan.entries, lam) - 2 * lam * math.log(dx) / (1 + lam)
