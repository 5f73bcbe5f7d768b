"""Applications of the lambda-divergence: centers, estimators, classifiers.

* :func:`lambda_barycenter` -- the point minimizing the summed divergence to
  a set of distributions, in either argument order.
* :func:`estimator_residual` -- the stationarity condition satisfied by a
  minimum-divergence estimate inside a parametric model, plus a Boltzmann
  machine instance generator (Hamming cost on binary states).
* :func:`classifier_boundary_scan` -- points equidistant (in divergence)
  from two prototypes.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .divergence import gradient_from_solutions, lambda_divergence
from .errors import DimensionMismatch, NonConvergence
from .geometry import _hessian_fd, dual_solve, kl_from_log, phi_hessian
from .simplex import ProbabilityVector, Tolerance, as_matrix, as_vector
from .sinkhorn import _check_lambda

_ARMIJO = 1e-4


class BarycenterDirection(str, enum.Enum):
    """Argument order of the divergence summed by the barycenter.

    ``POINTS_TO_CENTER`` minimizes ``sum_i D[q_i : p]``;
    ``CENTER_TO_POINTS`` minimizes ``sum_i D[p : q_i]``.
    """

    POINTS_TO_CENTER = "points-to-center"
    CENTER_TO_POINTS = "center-to-points"


@dataclass(frozen=True)
class BarycenterProblem:
    points: tuple[NDArray[np.float64], ...]
    M: NDArray[np.float64]
    lam: float
    direction: BarycenterDirection = BarycenterDirection.POINTS_TO_CENTER

    def __post_init__(self):
        pts = tuple(ProbabilityVector(q).values for q in self.points)
        if len(pts) < 2:
            raise ValueError("a barycenter needs at least 2 points")
        n = pts[0].size
        if any(q.size != n for q in pts):
            raise DimensionMismatch("all points must have the same dimension")
        M = as_matrix(self.M)
        if M.shape != (n, n):
            raise DimensionMismatch(f"M has shape {M.shape}, expected {(n, n)}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "lam", _check_lambda(self.lam))
        object.__setattr__(self, "direction", BarycenterDirection(self.direction))


@dataclass(frozen=True)
class BarycenterResult:
    point: ProbabilityVector
    objective: float
    residual: float
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)


def _value_and_gradient(prob: BarycenterProblem, x, tol):
    n = x.size
    total = 0.0
    grad = np.zeros(n - 1)
    if prob.direction is BarycenterDirection.CENTER_TO_POINTS:
        same = dual_solve(prob.M, x, x, prob.lam, tol)
        for q in prob.points:
            cross = dual_solve(prob.M, x, q, prob.lam, tol)
            total += kl_from_log(same.log_plan, cross.log_plan)
            grad += gradient_from_solutions(same, cross, x, q, "first")
    else:
        for q in prob.points:
            same = dual_solve(prob.M, q, q, prob.lam, tol)
            cross = dual_solve(prob.M, q, x, prob.lam, tol)
            total += kl_from_log(same.log_plan, cross.log_plan)
            grad += gradient_from_solutions(None, cross, q, x, "second")
    gamma = prob.lam / (1.0 + prob.lam)
    return gamma * total, np.append(grad, 0.0)


def _stationarity(x, g) -> float:
    # L1 norm of x * (g - <x, g>): the gradient projected onto the simplex
    # tangent space in the metric that the mirror step uses
    return float(np.abs(x * (g - x @ g)).sum())


def lambda_barycenter(prob: BarycenterProblem, tol: Tolerance | None = None,
                      start=None) -> BarycenterResult:
    """Minimize the summed lambda-divergence over the open simplex.

    Entropic mirror descent (the simplex projection taken in KL rather than
    Euclidean geometry, so iterates stay strictly positive) with Armijo
    backtracking.  Gradients are exact, from the dual solutions.

    Parameters
    ----------
    prob : BarycenterProblem
    tol : Tolerance, optional
        ``value_tol`` bounds the first-order residual
        ``sum_i |x_i (g_i - <x, g>)|``; ``max_iter`` caps descent steps.
    start : array-like, optional
        Initial point; defaults to the arithmetic mean of the points.

    Raises
    ------
    NonConvergence
        If the residual is still above ``value_tol`` after ``max_iter``
        steps or the line search cannot make progress.  ``result`` holds
        the last :class:`BarycenterResult`.
    """
    tol = tol or Tolerance()
    inner = Tolerance(marginal_tol=min(tol.marginal_tol, 1e-12), max_iter=100_000)
    x = np.mean(prob.points, axis=0) if start is None else ProbabilityVector(start).values.copy()
    f, g = _value_and_gradient(prob, x, inner)
    history = [f]
    step = 1.0
    res = _stationarity(x, g)
    it = 0
    stalled = False
    while res > tol.value_tol and it < min(tol.max_iter, 10_000):
        it += 1
        t = step
        while True:
            logx = np.log(x) - t * (g - x @ g)
            xn = np.exp(logx - logx.max())
            xn /= xn.sum()
            fn, gn = _value_and_gradient(prob, xn, inner)
            if fn <= f + _ARMIJO * (g @ (xn - x)):
                break
            t *= 0.5
            if t < 1e-14:
                stalled = True
                break
        if stalled:
            break
        x, f, g = xn, fn, gn
        history.append(f)
        step = min(2 * t, 1e3)
        res = _stationarity(x, g)
    result = BarycenterResult(ProbabilityVector(x, renormalize=True), f, res, it, history)
    if res > tol.value_tol:
        raise NonConvergence("barycenter descent did not reach value_tol", it, res, result)
    return result


def stationarity_condition(prob: BarycenterProblem, center, h: float = 1e-4,
                           tol: Tolerance | None = None) -> NDArray[np.float64]:
    """``sum_i G(q_i, p)(q_i - p)`` with ``G`` from central finite differences.

    ``G(q, p)`` is the Hessian of ``C_lam(q, .)`` at ``p`` over reduced
    coordinates.  Vanishes at a points-to-center barycenter.
    """
    tol = tol or Tolerance(marginal_tol=1e-13)
    p = as_vector(center)
    k = p.size - 1
    out = np.zeros(k)
    for q in prob.points:
        G = cuturi_hessian_fd(prob.M, q, p, prob.lam, h, tol)
        out += G @ (q - p)[:k]
    return out


def cuturi_hessian_fd(M, p, q, lam: float, h: float = 1e-4,
                      tol: Tolerance | None = None) -> NDArray[np.float64]:
    """Central-difference Hessian of ``q -> C_lam(p, q)`` in reduced coordinates."""
    tol = tol or Tolerance(marginal_tol=1e-13)
    p, q = as_vector(p), as_vector(q)

    def f(x):
        qq = np.append(x, 1.0 - x.sum())
        return dual_solve(M, p, qq, lam, tol).cuturi

    return _hessian_fd(f, q[:-1].copy(), h)


def estimator_residual(qhat, model_point, model_jacobian, M, lam: float,
                       method: str = "exact", tol: Tolerance | None = None,
                       h: float = 1e-4) -> NDArray[np.float64]:
    """Stationarity residual ``(p - qhat)^T G(qhat, p) dp/dxi`` of a minimum-divergence estimate.

    ``G(qhat, p)`` is the Hessian of ``C_lam(qhat, .)`` at ``p``.  The
    residual is the gradient of ``xi -> D_lam[qhat : p(xi)]`` and vanishes at
    the estimate.

    Parameters
    ----------
    qhat : array-like, shape (n,)
        Empirical distribution.
    model_point : array-like, shape (n,)
        ``p(xi)``.
    model_jacobian : array-like, shape (n, d)
        ``dp/dxi``; columns sum to zero.
    method : {"exact", "fd"}
        ``"exact"`` takes ``G`` from the inverse Fisher matrix of
        ``P*(qhat, p)``; ``"fd"`` uses finite differences of ``C_lam``
        with step ``h``.
    """
    lam = _check_lambda(lam)
    qhat, p = as_vector(qhat), as_vector(model_point)
    J = np.asarray(model_jacobian, dtype=np.float64)
    if J.ndim == 1:
        J = J[:, None]
    if J.shape[0] != p.size:
        raise DimensionMismatch(f"jacobian has {J.shape[0]} rows, expected {p.size}")
    k = p.size - 1
    if method == "exact":
        sol = dual_solve(M, qhat, p, lam, tol or Tolerance(marginal_tol=1e-12))
        G = phi_hessian(sol.plan, lam)[k:, k:]
    elif method == "fd":
        G = cuturi_hessian_fd(M, qhat, p, lam, h, tol)
    else:
        raise ValueError(f"method must be 'exact' or 'fd', got {method!r}")
    return (p - qhat)[:k] @ G @ J[:k]


def hamming_cost(k: int) -> NDArray[np.float64]:
    """Hamming distances between all ``2^k`` binary states (state index = bit pattern)."""
    states = binary_states(k)
    return np.abs(states[:, None, :] - states[None, :, :]).sum(axis=-1).astype(np.float64)


def binary_states(k: int) -> NDArray[np.int64]:
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.int64)


def boltzmann_features(k: int) -> NDArray[np.float64]:
    """Sufficient statistics ``(x_i, x_i x_j for i < j)`` of a Boltzmann machine, per state."""
    x = binary_states(k).astype(np.float64)
    pairs = [x[:, i] * x[:, j] for i, j in itertools.combinations(range(k), 2)]
    return np.column_stack([x] + pairs) if pairs else x


def boltzmann_model(k: int, xi) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Distribution ``p(x; xi) ~ exp(xi . f(x))`` and its Jacobian ``dp/dxi``.

    ``xi`` has ``k`` biases followed by ``k (k - 1) / 2`` pairwise weights.
    """
    F = boltzmann_features(k)
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (F.shape[1],):
        raise DimensionMismatch(f"xi must have {F.shape[1]} entries, got shape {xi.shape}")
    z = F @ xi
    p = np.exp(z - z.max())
    p /= p.sum()
    J = p[:, None] * (F - p @ F)
    return p, J


def boltzmann_instance(k: int, seed: int = 0, scale: float = 1.0, samples: int = 200):
    """Random Boltzmann-machine estimation problem on ``k`` binary units.

    Returns ``(M, xi_true, qhat)``: the Hamming cost, the generating
    parameters, and an empirical distribution from ``samples`` draws
    (smoothed by one pseudo-count per state so it stays in the open simplex).
    """
    rng = np.random.default_rng(seed)
    xi = scale * rng.normal(size=boltzmann_features(k).shape[1])
    p, _ = boltzmann_model(k, xi)
    counts = rng.multinomial(samples, p) + 1.0
    return hamming_cost(k), xi, counts / counts.sum()


class BoundaryOrientation(str, enum.Enum):
    """``PROTOTYPES_FIRST``: ``D[p1 : q] = D[p2 : q]``; ``PROTOTYPES_SECOND``: ``D[q : p1] = D[q : p2]``."""

    PROTOTYPES_FIRST = "prototypes-first"
    PROTOTYPES_SECOND = "prototypes-second"


class _Difference:
    """``q -> D[p1 : q] - D[p2 : q]`` (or the swapped order), caching the fixed solves."""

    def __init__(self, p1, p2, M, lam, orientation, tol):
        self.p1, self.p2 = as_vector(p1), as_vector(p2)
        self.M, self.lam, self.tol = as_matrix(M), _check_lambda(lam), tol
        self.orientation = BoundaryOrientation(orientation)
        if self.orientation is BoundaryOrientation.PROTOTYPES_FIRST:
            self.same1 = dual_solve(self.M, self.p1, self.p1, self.lam, tol).log_plan
            self.same2 = dual_solve(self.M, self.p2, self.p2, self.lam, tol).log_plan

    def __call__(self, q) -> float:
        M, lam, tol = self.M, self.lam, self.tol
        gamma = lam / (1.0 + lam)
        if self.orientation is BoundaryOrientation.PROTOTYPES_FIRST:
            d1 = kl_from_log(self.same1, dual_solve(M, self.p1, q, lam, tol).log_plan)
            d2 = kl_from_log(self.same2, dual_solve(M, self.p2, q, lam, tol).log_plan)
        else:
            same = dual_solve(M, q, q, lam, tol).log_plan
            d1 = kl_from_log(same, dual_solve(M, q, self.p1, lam, tol).log_plan)
            d2 = kl_from_log(same, dual_solve(M, q, self.p2, lam, tol).log_plan)
        return gamma * (d1 - d2)


def _bisect(fn, a, b, fa, fb, target: float):
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = fn(m)
        if abs(fm) <= target:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
        if np.max(np.abs(b - a)) < 1e-15:
            break
    return a if abs(fa) < abs(fb) else b


def boundary_on_segment(p1, p2, M, lam: float, start, end, samples: int = 64,
                        orientation: BoundaryOrientation | str = BoundaryOrientation.PROTOTYPES_FIRST,
                        target: float = 1e-8, tol: Tolerance | None = None) -> list[NDArray[np.float64]]:
    """Boundary points on the segment ``[start, end]`` (any ``n``).

    The segment is sampled at ``samples`` equally spaced points; every sign
    change of the divergence difference is refined by bisection until
    ``|Delta D| <= target``.
    """
    tol = tol or Tolerance(marginal_tol=1e-12)
    diff = _Difference(p1, p2, M, lam, orientation, tol)
    a, b = as_vector(start), as_vector(end)
    ts = np.linspace(0.0, 1.0, samples)
    pts = [(1 - t) * a + t * b for t in ts]
    vals = [diff(q) for q in pts]
    return _refine(diff, pts, vals, [(i, i + 1) for i in range(samples - 1)], target)


def _refine(diff, pts, vals, edges, target):
    found = []
    for i, v in enumerate(vals):
        if abs(v) <= target:
            found.append(pts[i])
    for i, j in edges:
        vi, vj = vals[i], vals[j]
        if abs(vi) <= target or abs(vj) <= target or np.sign(vi) == np.sign(vj):
            continue
        found.append(_bisect(diff, pts[i], pts[j], vi, vj, target))
    return found


def classifier_boundary_scan(p1, p2, M, lam: float, grid: int = 50,
                             orientation: BoundaryOrientation | str = BoundaryOrientation.PROTOTYPES_FIRST,
                             target: float = 1e-8, tol: Tolerance | None = None) -> list[NDArray[np.float64]]:
    """Points of the 2-simplex where the two divergences are equal.

    Scans the interior lattice ``(i, j, grid - i - j) / grid`` with
    ``i, j >= 1``, and bisects every lattice edge (horizontal, vertical and
    diagonal neighbours) across which ``Delta D`` changes sign.  Lattice
    points with ``|Delta D| <= target`` are returned as they are.  Returned
    points all satisfy ``|Delta D| <= target`` unless bisection bottoms out
    at machine precision.
    """
    if as_vector(p1).size != 3:
        raise DimensionMismatch("the lattice scan is for n = 3; use boundary_on_segment otherwise")
    if grid < 3:
        raise ValueError("grid must be at least 3")
    tol = tol or Tolerance(marginal_tol=1e-12)
    diff = _Difference(p1, p2, M, lam, orientation, tol)
    index = {}
    pts, vals = [], []
    for i in range(1, grid - 1):
        for j in range(1, grid - i):
            q = np.array([i, j, grid - i - j], dtype=np.float64) / grid
            index[(i, j)] = len(pts)
            pts.append(q)
            vals.append(diff(q))
    edges = []
    for (i, j), a in index.items():
        for di, dj in ((1, 0), (0, 1), (1, -1)):
            b = index.get((i + di, j + dj))
            if b is not None:
                edges.append((a, b))
    return _refine(diff, pts, vals, edges, target)


def boundary_difference(p1, p2, M, lam: float, q,
                        orientation: BoundaryOrientation | str = BoundaryOrientation.PROTOTYPES_FIRST,
                        tol: Tolerance | None = None) -> float:
    """``D[p1 : q] - D[p2 : q]`` (or ``D[q : p1] - D[q : p2]``)."""
    if BoundaryOrientation(orientation) is BoundaryOrientation.PROTOTYPES_FIRST:
        return lambda_divergence(M, p1, q, lam, tol=tol) - lambda_divergence(M, p2, q, lam, tol=tol)
    return lambda_divergence(M, q, p1, lam, tol=tol) - lambda_divergence(M, q, p2, lam, tol=tol)
