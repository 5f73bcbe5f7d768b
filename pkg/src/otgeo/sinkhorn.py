"""Entropy-relaxed transport: Gibbs kernel, Sinkhorn scaling and e-projections.

The solver minimizes ``F(P) = <M, P> - lam * H(P)`` over the transportation
polytope U(p, q).  Its minimizer has the form ``P_ij = c a_i b_j K_ij`` with
``K = exp(-M / lam)``, and Sinkhorn's algorithm finds ``a`` and ``b`` by
alternately rescaling rows and columns, i.e. alternately e-projecting onto
the plans with prescribed row sums and prescribed column sums.

Scaling vectors are stored as logarithms throughout so that small ``lam``
(where ``K`` underflows) is handled without special cases.

When ``K`` is close to diagonal (small ``lam`` relative to the cost scale)
Sinkhorn contracts by a factor of ``1 - O(exp(-min cost / lam))`` per sweep
and can need millions of sweeps.  After a fixed number of sweeps the solver
therefore switches to Newton's method on the same dual problem, which lands
on the same fixed point in a handful of steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, InvalidProbability, NonConvergence
from .simplex import (
    ProbabilityVector,
    Tolerance,
    TransportPlan,
    as_matrix,
    as_vector,
    entropy,
    transport_cost,
)

# below this, exp(-m/lam) is computed in the log domain only
_LINEAR_MIN_LOGK = -300.0
# Sinkhorn sweeps before switching to Newton steps on the dual
_NEWTON_AFTER = 500


class Gauge(str, enum.Enum):
    """Normalization resolving the ``(mu a, b / mu)`` freedom of the scalings."""

    SUM_ONE = "sum-one"
    LAST_ENTRY_ONE = "last-entry-one"


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not (lam > 0 and np.isfinite(lam)):
        raise ValueError(f"lambda must be a positive finite number, got {lam!r}")
    return lam


def logsumexp(x: NDArray[np.float64], axis=None) -> NDArray[np.float64]:
    """Max-shifted log-sum-exp that tolerates all ``-inf`` slices."""
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return out.reshape(())
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class GibbsKernel:
    """``K_ij = exp(-m_ij / lam)``, kept as ``log K`` to survive small ``lam``."""

    log_entries: NDArray[np.float64]
    lam: float

    @property
    def entries(self) -> NDArray[np.float64]:
        return np.exp(self.log_entries)


def gibbs_kernel(M, lam: float) -> GibbsKernel:
    lam = _check_lambda(lam)
    logK = -as_matrix(M) / lam
    logK.setflags(write=False)
    return GibbsKernel(logK, lam)


@dataclass(frozen=True)
class ScalingSolution:
    """Dual scaling vectors of an optimal plan, ``P_ij = c a_i b_j K_ij``.

    ``log_a``/``log_b``/``log_c`` are authoritative; ``a``, ``b`` and ``c``
    exponentiate them and may overflow for extremely small ``lam``.  Rows or
    columns with zero marginal mass carry ``log_a = -inf`` (``a = 0``).
    """

    log_a: NDArray[np.float64]
    log_b: NDArray[np.float64]
    log_c: float
    lam: float
    gauge: Gauge
    iterations: int = 0
    residual: float = 0.0

    @property
    def a(self) -> NDArray[np.float64]:
        return np.exp(self.log_a)

    @property
    def b(self) -> NDArray[np.float64]:
        return np.exp(self.log_b)

    @property
    def c(self) -> float:
        return float(np.exp(self.log_c))

    def log_plan(self, kernel: GibbsKernel) -> NDArray[np.float64]:
        return self.log_c + self.log_a[:, None] + kernel.log_entries + self.log_b[None, :]

    def plan(self, kernel: GibbsKernel) -> NDArray[np.float64]:
        return np.exp(self.log_plan(kernel))

    def regauge(self, gauge: Gauge | str) -> ScalingSolution:
        gauge = Gauge(gauge)
        la, lb = self.log_a, self.log_b
        if gauge is Gauge.SUM_ONE:
            sa, sb = float(logsumexp(la)), float(logsumexp(lb))
        else:
            if not (np.isfinite(la[-1]) and np.isfinite(lb[-1])):
                raise ValueError("last-entry-one gauge needs positive mass on the last row and column")
            sa, sb = float(la[-1]), float(lb[-1])
        return ScalingSolution(la - sa, lb - sb, self.log_c + sa + sb, self.lam, gauge,
                               self.iterations, self.residual)


def entropic_objective(M, P, lam: float) -> float:
    """``F_lam(P) = <M, P> - lam H(P)``, the quantity Sinkhorn minimizes."""
    return transport_cost(M, P) - lam * entropy(P)


def cuturi_value(M, P, lam: float) -> float:
    """``(<M, P> - lam H(P)) / (1 + lam)`` evaluated at a given plan."""
    return entropic_objective(M, P, lam) / (1.0 + lam)


def marginal_residual(P, p, q) -> float:
    """max of the L1 row-marginal and column-marginal errors."""
    P = np.asarray(P)
    return float(max(np.abs(P.sum(axis=1) - p).sum(), np.abs(P.sum(axis=0) - q).sum()))


def _iterate_log(logK, p, q, tol: Tolerance, callback):
    log_p, log_q = np.log(p), np.log(q)
    f = np.zeros(logK.shape[0])
    g = np.zeros(logK.shape[1])
    err = np.inf
    it = 0
    for it in range(1, int(tol.max_iter) + 1):
        f = log_p - logsumexp(logK + g[None, :], axis=1)
        if callback is not None:
            callback(np.exp(f[:, None] + logK + g[None, :]))
        g = log_q - logsumexp(logK + f[:, None], axis=0)
        if callback is not None:
            callback(np.exp(f[:, None] + logK + g[None, :]))
        rows = np.exp(f + logsumexp(logK + g[None, :], axis=1))
        err = float(np.abs(rows - p).sum())
        if err <= tol.marginal_tol:
            break
    return f, g, it, err


def _iterate_linear(K, p, q, tol: Tolerance, callback):
    u = np.ones(K.shape[0])
    v = np.ones(K.shape[1])
    err = np.inf
    it = 0
    for it in range(1, int(tol.max_iter) + 1):
        u = p / (K @ v)
        if callback is not None:
            callback(u[:, None] * K * v[None, :])
        v = q / (K.T @ u)
        if callback is not None:
            callback(u[:, None] * K * v[None, :])
        err = float(np.abs(u * (K @ v) - p).sum())
        if err <= tol.marginal_tol:
            break
    return np.log(u), np.log(v), it, err


def _dual_objective(logK, p, q, f, g):
    # convex dual: sum_ij exp(f_i + logK_ij + g_j) - f.p - g.q, minimized at the scaling fixed point
    return float(np.exp(f[:, None] + logK + g[None, :]).sum() - f @ p - g @ q)


def _newton_dual(logK, p, q, f, g, tol: float, max_steps: int):
    """Damped Newton on the dual, with ``g[-1]`` held fixed to remove the gauge freedom.

    Each step starts from an exact column projection, so on return the
    column marginals hold exactly and ``err`` is the row-marginal error.
    """
    s = logK.shape[0]
    log_q = np.log(q)
    f, g = f.copy(), g.copy()
    err = np.inf
    steps = 0
    for steps in range(1, max_steps + 1):
        # an exact column projection keeps the total mass at one, as after a Sinkhorn sweep
        g = log_q - logsumexp(logK + f[:, None], axis=0)
        P = np.exp(f[:, None] + logK + g[None, :])
        rs, cs = P.sum(axis=1), P.sum(axis=0)
        err = float(max(np.abs(rs - p).sum(), np.abs(cs - q).sum()))
        if err <= tol:
            return f, g, steps - 1, err
        grad = np.concatenate([rs - p, (cs - q)[:-1]])
        H = np.block([[np.diag(rs), P[:, :-1]], [P[:, :-1].T, np.diag(cs[:-1])]])
        try:
            d = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            d = -np.linalg.lstsq(H, grad, rcond=None)[0]
        slope = float(grad @ d)
        obj = _dual_objective(logK, p, q, f, g)
        t = 1.0
        with np.errstate(over="ignore", invalid="ignore"):      # overshooting trial steps are rejected
            for _ in range(40):
                fn, gn = f + t * d[:s], g.copy()
                gn[:-1] += t * d[s:]
                Pn = np.exp(fn[:, None] + logK + gn[None, :])
                errn = float(max(np.abs(Pn.sum(axis=1) - p).sum(), np.abs(Pn.sum(axis=0) - q).sum()))
                # near the optimum the objective change drowns in rounding; fall back on the residual
                if _dual_objective(logK, p, q, fn, gn) <= obj + 1e-4 * t * slope or errn < err:
                    break
                t *= 0.5
            else:
                break
        f, g = fn, gn
    return f, g, steps, err


def sinkhorn_solve(M, p, q, lam: float, tol: Tolerance | None = None,
                   gauge: Gauge | str = Gauge.SUM_ONE,
                   callback: Callable[[NDArray[np.float64]], None] | None = None,
                   ) -> tuple[TransportPlan, ScalingSolution]:
    """Solve the entropy-relaxed transportation problem.

    Parameters
    ----------
    M : array-like, shape (s, r)
        Cost matrix.
    p, q : array-like, shapes (s,) and (r,)
        Sender and receiver distributions.  Zero entries are allowed; the
        matching rows/columns are removed before iterating and come back as
        zero rows/columns of the plan.
    lam : float
        Entropy weight, > 0.
    tol : Tolerance, optional
        Stopping rule; L1 marginal error on both sides.
    gauge : Gauge
        Normalization of the returned scaling vectors.
    callback : callable, optional
        Called with the (unnormalized) plan after every row and every
        column projection, starting from the normalized free plan K / sum K.
        Passing a callback disables the Newton stage, so every reported
        iterate is a Sinkhorn projection.

    Returns
    -------
    plan : TransportPlan
    scaling : ScalingSolution

    Raises
    ------
    NonConvergence
        If ``tol.max_iter`` iterations do not reach ``tol.marginal_tol``.
        The exception's ``result`` holds the last ``(plan, scaling)``.
    """
    lam = _check_lambda(lam)
    tol = tol or Tolerance()
    M = as_matrix(M)
    p, q = as_vector(p), as_vector(q)
    if M.shape != (p.size, q.size):
        raise DimensionMismatch(f"M has shape {M.shape} but p, q have sizes {p.size}, {q.size}")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidProbability("entries must be finite and >= 0", name)
        if abs(v.sum() - 1.0) > 1e-12:
            raise InvalidProbability(f"entries sum to {v.sum()!r}, not 1", name)

    rows, cols = p > 0, q > 0
    kernel = gibbs_kernel(M, lam)
    logK = kernel.log_entries[np.ix_(rows, cols)]
    pp, qq = p[rows], q[cols]

    # with a callback every iterate is a genuine Sinkhorn projection, so no Newton stage
    newton = callback is None and tol.max_iter > _NEWTON_AFTER
    sweep_tol = replace(tol, max_iter=_NEWTON_AFTER) if newton else tol
    if callback is not None:
        callback(np.exp(logK - logsumexp(logK)))
    if lam >= 1.0 and logK.min() > _LINEAR_MIN_LOGK:
        f, g, iters, err = _iterate_linear(np.exp(logK), pp, qq, sweep_tol, callback)
    else:
        f, g, iters, err = _iterate_log(logK, pp, qq, sweep_tol, callback)
    if newton and err > tol.marginal_tol:
        f, g, steps, _ = _newton_dual(logK, pp, qq, f, g, tol.marginal_tol, int(tol.max_iter) - iters)
        iters += steps

    log_a = np.full(p.size, -np.inf)
    log_b = np.full(q.size, -np.inf)
    log_a[rows], log_b[cols] = f, g
    with np.errstate(divide="ignore"):
        P = np.exp(log_a[:, None] + kernel.log_entries + log_b[None, :])
    residual = marginal_residual(P, p, q)
    scaling = ScalingSolution(log_a, log_b, 0.0, lam, Gauge.SUM_ONE, iters, residual)
    scaling = scaling.regauge(gauge)
    if residual > tol.marginal_tol:
        raise NonConvergence("Sinkhorn did not reach the marginal tolerance", iters, residual,
                             (P, scaling))
    return TransportPlan(P), scaling


def e_project_rows(P, p) -> TransportPlan:
    """e-projection onto the plans whose row sums are ``p``: ``(a_i P_ij)``, ``a_i = p_i / sum_j P_ij``."""
    P = np.asarray(P, dtype=np.float64)
    p = as_vector(p)
    rs = P.sum(axis=1)
    if np.any(rs <= 0):
        raise InvalidProbability("row sum is zero; cannot rescale", "plan", int(np.flatnonzero(rs <= 0)[0]))
    return TransportPlan((p / rs)[:, None] * P)


def e_project_cols(P, q) -> TransportPlan:
    """Column analogue of :func:`e_project_rows`."""
    P = np.asarray(P, dtype=np.float64)
    q = as_vector(q)
    cs = P.sum(axis=0)
    if np.any(cs <= 0):
        raise InvalidProbability("column sum is zero; cannot rescale", "plan", int(np.flatnonzero(cs <= 0)[0]))
    return TransportPlan(P * (q / cs)[None, :])


def free_optimal_plan(M, lam: float) -> TransportPlan:
    """Unconstrained minimizer ``c K`` of the entropy-relaxed cost."""
    logK = gibbs_kernel(M, lam).log_entries
    return TransportPlan(np.exp(logK - logsumexp(logK)))


def rate_distortion_plan(M, p, lam: float) -> TransportPlan:
    """Optimal plan with the sender side fixed to ``p`` and the receiver free.

    ``P_ij = p_i K_ij / sum_j K_ij``.
    """
    logK = gibbs_kernel(M, lam).log_entries
    p = as_vector(p)
    with np.errstate(divide="ignore"):
        logP = np.log(p)[:, None] + logK - logsumexp(logK, axis=1)[:, None]
    return TransportPlan(np.exp(logP))


@dataclass(frozen=True)
class MixedCoordinates:
    """Marginals (m-part) plus interaction log-ratios ``theta`` (e-part)."""

    p: ProbabilityVector
    q: ProbabilityVector
    theta: NDArray[np.float64]


def mixed_coordinates(P) -> MixedCoordinates:
    """``theta_ij = log(P_ij P_sr / (P_ir P_sj))`` for ``i < s, j < r``."""
    P = np.asarray(P, dtype=np.float64)
    if np.any(P <= 0):
        i, j = (int(k) for k in np.argwhere(P <= 0)[0])
        raise InvalidProbability("mixed coordinates need a strictly positive plan", "plan", (i, j))
    L = np.log(P)
    theta = L[:-1, :-1] + L[-1, -1] - L[:-1, -1][:, None] - L[-1, :-1][None, :]
    theta.setflags(write=False)
    return MixedCoordinates(ProbabilityVector(P.sum(axis=1), renormalize=True),
                            ProbabilityVector(P.sum(axis=0), renormalize=True), theta)


def ras_transform(P, a, b) -> TransportPlan:
    """RAS rescaling ``(c a_i b_j P_ij)`` normalized to total mass one."""
    P = np.asarray(P, dtype=np.float64)
    a, b = as_vector(a), as_vector(b)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("RAS scalings must be strictly positive")
    Q = a[:, None] * P * b[None, :]
    return TransportPlan(Q / Q.sum())
