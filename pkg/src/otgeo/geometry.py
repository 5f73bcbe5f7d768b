"""Dually flat structure of the manifold of optimal plans.

Optimal plans form an exponential family

    log P_ij = k (alpha_i + beta_j) - m_ij / lam - k psi,     k = (1 + lam) / lam

with canonical parameters ``theta = (alpha, beta)`` and expectation
parameters ``eta = (p, q)``.  The potential ``psi`` and the Cuturi function
``phi = C_lam`` are Legendre duals.  All coordinates here are *reduced*: the
canonical gauge sets ``alpha_s = beta_r = 0`` and the last entries of ``p``
and ``q`` are implied by normalization, giving ``(s - 1) + (r - 1)``
free coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .simplex import Tolerance, as_matrix, as_vector
from .sinkhorn import (
    Gauge,
    ScalingSolution,
    _check_lambda,
    cuturi_value,
    gibbs_kernel,
    logsumexp,
    sinkhorn_solve,
)


def theta_factor(lam: float) -> float:
    """``(1 + lam) / lam``, the exponent linking ``a_i`` and ``alpha_i``."""
    return (1.0 + lam) / lam


@dataclass(frozen=True)
class DualPotentials:
    """Canonical parameters of an optimal plan in the gauge ``alpha_s = beta_r = 0``."""

    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    psi: float
    lam: float
    gauge: str = "last-entry-zero"

    @property
    def theta(self) -> NDArray[np.float64]:
        """Reduced canonical coordinates ``(alpha_1..alpha_{s-1}, beta_1..beta_{r-1})``."""
        return np.concatenate([self.alpha[:-1], self.beta[:-1]])


def potentials_from_scaling(s: ScalingSolution) -> DualPotentials:
    """``alpha = (lam / (1 + lam)) log a``, likewise ``beta``; ``psi = -(lam / (1 + lam)) log c``."""
    s = s.regauge(Gauge.LAST_ENTRY_ONE)
    w = 1.0 / theta_factor(s.lam)
    return DualPotentials(w * s.log_a, w * s.log_b, -w * s.log_c, s.lam)


def psi_value(M, alpha, beta, lam: float) -> float:
    """Potential (free energy) evaluated directly from ``(alpha, beta)``.

    No transport problem is solved: the normalizer is explicit once the
    canonical parameters are fixed.
    """
    lam = _check_lambda(lam)
    k = theta_factor(lam)
    logits = k * (as_vector(alpha)[:, None] + as_vector(beta)[None, :]) - as_matrix(M) / lam
    return float(logsumexp(logits)) / k


def plan_from_potentials(M, pot: DualPotentials) -> NDArray[np.float64]:
    k = theta_factor(pot.lam)
    logP = k * (pot.alpha[:, None] + pot.beta[None, :]) - as_matrix(M) / pot.lam - k * pot.psi
    return np.exp(logP)


@dataclass(frozen=True)
class DualSolution:
    """Everything known about one solved problem ``(M, p, q, lam)``."""

    plan: NDArray[np.float64]
    log_plan: NDArray[np.float64]
    scaling: ScalingSolution
    potentials: DualPotentials
    cuturi: float


def dual_solve(M, p, q, lam: float, tol: Tolerance | None = None) -> DualSolution:
    plan, scaling = sinkhorn_solve(M, p, q, lam, tol)
    P = plan.entries
    logP = scaling.log_plan(gibbs_kernel(M, lam))
    return DualSolution(P, logP, scaling, potentials_from_scaling(scaling), cuturi_value(M, P, lam))


def kl_from_log(log_P, log_Q) -> float:
    """``KL[P : Q]`` from log-plans; robust where the plans underflow."""
    log_P, log_Q = np.asarray(log_P), np.asarray(log_Q)
    live = np.isfinite(log_P)
    return float(np.sum(np.exp(log_P[live]) * (log_P[live] - log_Q[live])))


def cuturi_function(M, p, q, lam: float, tol: Tolerance | None = None) -> float:
    """Entropy-relaxed optimal cost ``C_lam(p, q) = (<M, P*> - lam H(P*)) / (1 + lam)``.

    Equal to the dual potential ``phi_lam(p, q)``.  Use
    :func:`otgeo.oracle.exact_wasserstein` for ``lam = 0``.
    """
    return dual_solve(M, p, q, lam, tol).cuturi


def legendre_residual(M, p, q, lam: float, tol: Tolerance | None = None) -> float:
    """``|psi + phi - alpha.p - beta.q|`` at the solved optimum."""
    sol = dual_solve(M, p, q, lam, tol)
    pot = sol.potentials
    return abs(pot.psi + sol.cuturi - pot.alpha @ as_vector(p) - pot.beta @ as_vector(q))


def fisher_info_theta(P) -> NDArray[np.float64]:
    """Reduced block matrix of the Fisher information in canonical coordinates.

    Rows/columns are ordered ``(p_1..p_{s-1}, q_1..q_{r-1})``::

        [ diag(p) - p p^T      P - p q^T      ]
        [ (P - p q^T)^T        diag(q) - q q^T ]

    The Hessian of ``psi`` over ``(alpha, beta)`` is this matrix times
    ``(1 + lam) / lam``; see :func:`psi_hessian`.
    """
    P = np.asarray(P, dtype=np.float64)
    p, q = P.sum(axis=1)[:-1], P.sum(axis=0)[:-1]
    top = np.hstack([np.diag(p) - np.outer(p, p), P[:-1, :-1] - np.outer(p, q)])
    bottom = np.hstack([(P[:-1, :-1] - np.outer(p, q)).T, np.diag(q) - np.outer(q, q)])
    return np.vstack([top, bottom])


def psi_hessian(P, lam: float) -> NDArray[np.float64]:
    return theta_factor(lam) * fisher_info_theta(P)


def phi_hessian(P, lam: float) -> NDArray[np.float64]:
    """Riemannian metric ``G = grad_eta grad_eta phi`` in reduced ``(p, q)`` coordinates."""
    return np.linalg.inv(psi_hessian(P, lam))


def _reduced_psi(M, pot: DualPotentials):
    s = pot.alpha.size

    def f(theta):
        alpha = np.append(theta[:s - 1], 0.0)
        beta = np.append(theta[s - 1:], 0.0)
        return psi_value(M, alpha, beta, pot.lam)

    return f


def psi_gradient_fd(M, pot: DualPotentials, h: float = 1e-5) -> NDArray[np.float64]:
    """Central-difference gradient of ``psi`` in reduced canonical coordinates."""
    f = _reduced_psi(M, pot)
    theta = pot.theta
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def _hessian_fd(f, x, h):
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej)
                                 - f(x - ei + ej) + f(x - ei - ej)) / (4 * h**2)
    return H


def psi_hessian_fd(M, pot: DualPotentials, h: float = 1e-5,
                   richardson: bool = False) -> NDArray[np.float64]:
    """Central-difference Hessian of ``psi`` over reduced ``(alpha, beta)``.

    With ``richardson=True`` the step-``h`` and step-``2h`` estimates are
    combined to cancel the leading ``O(h^2)`` error.
    """
    f = _reduced_psi(M, pot)
    H = _hessian_fd(f, pot.theta, h)
    if richardson:
        H = (4 * H - _hessian_fd(f, pot.theta, 2 * h)) / 3
    return H


def fit_proportionality(H, F) -> tuple[float, float]:
    """Least-squares scalar ``c`` with ``H ~ c F`` and the relative Frobenius misfit."""
    H, F = np.asarray(H), np.asarray(F)
    c = float(np.sum(H * F) / np.sum(F * F))
    return c, float(np.linalg.norm(H - c * F) / np.linalg.norm(H))


def canonical_divergence(M, pq, pq_prime, lam: float, tol: Tolerance | None = None,
                         route: str = "bregman") -> float:
    """Divergence between the optimal plans of ``(p, q)`` and ``(p', q')``.

    Returns ``KL[P*(p, q) : P*(p', q')]``.  ``route="bregman"`` evaluates it
    from the Legendre pair as ``k (psi(theta') + phi(eta) - theta'.eta)``,
    ``route="kl"`` sums over the two plans directly.
    """
    (p, q), (p2, q2) = pq, pq_prime
    s1 = dual_solve(M, p, q, lam, tol)
    s2 = dual_solve(M, p2, q2, lam, tol)
    if route == "kl":
        return kl_from_log(s1.log_plan, s2.log_plan)
    if route != "bregman":
        raise ValueError(f"unknown route {route!r}")
    pot = s2.potentials
    val = pot.psi + s1.cuturi - pot.alpha @ as_vector(p) - pot.beta @ as_vector(q)
    return float(theta_factor(lam) * val)


def convexity_gap(M, x1, x2, nu: float, lam: float, tol: Tolerance | None = None) -> float:
    """``nu C(x1) + (1 - nu) C(x2) - C(nu x1 + (1 - nu) x2)``; nonnegative by convexity."""
    (p1, q1), (p2, q2) = x1, x2
    p1, q1, p2, q2 = (as_vector(v) for v in (p1, q1, p2, q2))
    pm = nu * p1 + (1 - nu) * p2
    qm = nu * q1 + (1 - nu) * q2
    pm, qm = pm / pm.sum(), qm / qm.sum()
    return (nu * cuturi_function(M, p1, q1, lam, tol)
            + (1 - nu) * cuturi_function(M, p2, q2, lam, tol)
            - cuturi_function(M, pm, qm, lam, tol))
