"""The lambda-divergence family on the probability simplex.

``D_{r,lam}[p : q] = gamma * KL[P*(r, p) : P*(r, q)]`` compares the optimal
plans that carry a reference ``r`` to ``p`` and to ``q``.  With ``r = p`` and
``gamma = lam / (1 + lam)`` it equals the Bregman-like expression

    C(p, p) - C(p, q) - grad_q C(p, q) . (p - q)

built from the Cuturi function, where ``grad_q C = beta``.  As ``lam`` grows
the unit-scaled divergence tends to ``KL[p : q]``.
"""

from __future__ import annotations

import enum
import itertools

import numpy as np
from numpy.typing import NDArray

from .geometry import DualSolution, dual_solve, kl_from_log, psi_hessian
from .simplex import Tolerance, as_vector
from .sinkhorn import _check_lambda


class ReferenceRule(str, enum.Enum):
    SOURCE_P = "source-p"
    ARITHMETIC_MEAN = "arithmetic"
    GEOMETRIC_MEAN = "geometric"


class ScalingFactorRule(str, enum.Enum):
    LAMBDA_OVER_ONE_PLUS_LAMBDA = "lambda-over-one-plus-lambda"
    UNIT = "unit"


def scaling_factor(lam: float, rule: ScalingFactorRule | str = ScalingFactorRule.LAMBDA_OVER_ONE_PLUS_LAMBDA) -> float:
    if ScalingFactorRule(rule) is ScalingFactorRule.UNIT:
        return 1.0
    return lam / (1.0 + lam)


def reference_distribution(p, q, rule: ReferenceRule | str = ReferenceRule.SOURCE_P) -> NDArray[np.float64]:
    p, q = as_vector(p), as_vector(q)
    rule = ReferenceRule(rule)
    if rule is ReferenceRule.SOURCE_P:
        return p
    if rule is ReferenceRule.ARITHMETIC_MEAN:
        return 0.5 * (p + q)
    r = np.sqrt(p * q)
    return r / r.sum()


def lambda_divergence(M, p, q, lam: float,
                      ref: ReferenceRule | str = ReferenceRule.SOURCE_P,
                      scale: ScalingFactorRule | str = ScalingFactorRule.LAMBDA_OVER_ONE_PLUS_LAMBDA,
                      tol: Tolerance | None = None) -> float:
    """``gamma * KL[P*(r, p) : P*(r, q)]`` for the chosen reference ``r``."""
    lam = _check_lambda(lam)
    r = reference_distribution(p, q, ref)
    L1 = dual_solve(M, r, p, lam, tol).log_plan
    L2 = dual_solve(M, r, q, lam, tol).log_plan
    return scaling_factor(lam, scale) * kl_from_log(L1, L2)


def bregman_like_divergence(M, p, q, lam: float, tol: Tolerance | None = None) -> float:
    """``C(p, p) - C(p, q) - beta(p, q) . (p - q)`` with ``beta`` from the dual solution."""
    lam = _check_lambda(lam)
    p, q = as_vector(p), as_vector(q)
    same = dual_solve(M, p, p, lam, tol)
    cross = dual_solve(M, p, q, lam, tol)
    return same.cuturi - cross.cuturi - cross.potentials.beta @ (p - q)


def lambda_zero_divergence(p, q) -> float:
    """Zero-entropy limit of ``KL[P*(p, p) : P*(p, q)]``: ``sum_{p_i > q_i} p_i log(p_i / q_i)``.

    Valid for costs with zero diagonal and positive off-diagonal entries
    that satisfy the triangle inequality.
    """
    p, q = as_vector(p), as_vector(q)
    m = p > q
    return float(np.sum(p[m] * np.log(p[m] / q[m])))


def divergence_gradient(M, p, q, lam: float, wrt: str = "second",
                        tol: Tolerance | None = None) -> NDArray[np.float64]:
    """Gradient of ``D_lam[p : q]`` (source reference, ``gamma = lam/(1+lam)``).

    Differentiates with respect to ``p`` (``wrt="first"``) or ``q``
    (``wrt="second"``) in reduced coordinates: the first ``n - 1`` entries,
    with the last one implied by normalization.  Second derivatives of the
    Cuturi function come from the inverse Fisher matrix of ``P*(p, q)``.
    """
    lam = _check_lambda(lam)
    p, q = as_vector(p), as_vector(q)
    if wrt not in ("first", "second"):
        raise ValueError(f"wrt must be 'first' or 'second', got {wrt!r}")
    cross = dual_solve(M, p, q, lam, tol)
    same = dual_solve(M, p, p, lam, tol) if wrt == "first" else None
    return gradient_from_solutions(same, cross, p, q, wrt)


def gradient_from_solutions(same: DualSolution | None, cross: DualSolution, p, q,
                            wrt: str) -> NDArray[np.float64]:
    """:func:`divergence_gradient` from already solved ``P*(p, p)`` and ``P*(p, q)``.

    ``same`` is only needed for ``wrt="first"``.
    """
    k = p.size - 1
    lam = cross.potentials.lam
    d = (p - q)[:k]
    H = psi_hessian(cross.plan, lam)
    if wrt == "second":
        rhs = np.concatenate([np.zeros(k), d])
        return -np.linalg.solve(H, rhs)[k:]
    rhs = np.concatenate([np.zeros(k), d])
    pot, sp = cross.potentials, same.potentials
    return (sp.alpha[:k] + sp.beta[:k] - pot.alpha[:k] - pot.beta[:k]
            - np.linalg.solve(H, rhs)[:k])


def min_reference_divergence(M, p, q, lam: float, grid: int = 40,
                             scale: ScalingFactorRule | str = ScalingFactorRule.LAMBDA_OVER_ONE_PLUS_LAMBDA,
                             tol: Tolerance | None = None) -> tuple[float, NDArray[np.float64]]:
    """Experimental: ``gamma * min_r KL[P*(p, r) : P*(q, r)]`` by grid search.

    Only for ``n <= 3``; scans interior simplex points with spacing
    ``1 / grid`` and returns ``(value, argmin r)``.
    """
    lam = _check_lambda(lam)
    p, q = as_vector(p), as_vector(q)
    n = p.size
    if n > 3:
        raise ValueError("grid search over r is limited to n <= 3")
    best = (np.inf, None)
    for idx in itertools.product(range(1, grid), repeat=n - 1):
        if sum(idx) >= grid:
            continue
        r = np.array(list(idx) + [grid - sum(idx)], dtype=float) / grid
        val = kl_from_log(dual_solve(M, p, r, lam, tol).log_plan, dual_solve(M, q, r, lam, tol).log_plan)
        if val < best[0]:
            best = (val, r)
    return scaling_factor(lam, scale) * best[0], best[1]
