"""Reference solvers used to validate the entropic machinery.

* :func:`exact_wasserstein` -- the unregularized transportation LP, solved
  with the transportation simplex (MODI potentials, Bland's rule), plus an
  optimal-face probe that flags non-unique optimal plans.
* :func:`brute_force_entropy_relaxed` -- a primal minimizer of
  ``<M, P> - lam H(P)`` over U(p, q) that never touches the Gibbs kernel or
  scaling vectors, so it can check Sinkhorn independently.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog

from .errors import DimensionMismatch, NonConvergence
from .simplex import TransportPlan, as_matrix, as_vector
from .sinkhorn import _check_lambda


@dataclass(frozen=True)
class ExactSolution:
    plan: TransportPlan
    cost: float
    unique: bool
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    iterations: int = 0


def _northwest_corner(p, q, row_order, col_order):
    s, r = p.size, q.size
    x = np.zeros((s, r))
    supply, demand = p[row_order].copy(), q[col_order].copy()
    basis = []
    i = j = 0
    while True:
        t = min(supply[i], demand[j])
        x[row_order[i], col_order[j]] = t
        basis.append((int(row_order[i]), int(col_order[j])))
        supply[i] -= t
        demand[j] -= t
        if i == s - 1 and j == r - 1:
            break
        if j == r - 1 or (i < s - 1 and supply[i] <= demand[j]):
            supply[i] = 0.0
            i += 1
        else:
            demand[j] = 0.0
            j += 1
    return x, basis


def _potentials(M, basis, s, r):
    u = np.full(s, np.nan)
    v = np.full(r, np.nan)
    by_row = [[] for _ in range(s)]
    by_col = [[] for _ in range(r)]
    for i, j in basis:
        by_row[i].append(j)
        by_col[j].append(i)
    u[0] = 0.0
    todo = deque([("r", 0)])
    while todo:
        kind, k = todo.popleft()
        if kind == "r":
            for j in by_row[k]:
                if np.isnan(v[j]):
                    v[j] = M[k, j] - u[k]
                    todo.append(("c", j))
        else:
            for i in by_col[k]:
                if np.isnan(u[i]):
                    u[i] = M[i, k] - v[k]
                    todo.append(("r", i))
    return u, v


def _tree_path(basis, s, start_row, end_col):
    """Basic cells on the unique tree path from a row node to a column node."""
    adj: dict[int, list[tuple[int, tuple[int, int]]]] = {}
    for i, j in basis:
        adj.setdefault(i, []).append((s + j, (i, j)))
        adj.setdefault(s + j, []).append((i, (i, j)))
    prev: dict[int, tuple[int, tuple[int, int]] | None] = {start_row: None}
    todo = deque([start_row])
    target = s + end_col
    while todo:
        node = todo.popleft()
        if node == target:
            break
        for nxt, cell in adj.get(node, []):
            if nxt not in prev:
                prev[nxt] = (node, cell)
                todo.append(nxt)
    path = []
    node = target
    while prev[node] is not None:
        node, cell = prev[node]
        path.append(cell)
    return path  # ordered from the column end back to the row end


def _transport_simplex(M, p, q, max_iter=10_000):
    s, r = M.shape
    x, basis = _northwest_corner(p, q, np.arange(s), np.arange(r))
    in_basis = np.zeros((s, r), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    for it in range(max_iter):
        u, v = _potentials(M, basis, s, r)
        reduced = M - u[:, None] - v[None, :]
        candidates = np.flatnonzero((reduced < -1e-12 * (1 + np.abs(M))).ravel() & ~in_basis.ravel())
        if candidates.size == 0:
            return x, basis, u, v, reduced, it
        ie, je = divmod(int(candidates[0]), r)          # Bland: lowest index enters
        path = _tree_path(basis, s, ie, je)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[c] for c in minus)
        leaving = min(c for c in minus if x[c] - theta <= 1e-15)   # Bland: lowest index leaves
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[ie, je] += theta
        x[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ie, je))
        in_basis[leaving] = False
        in_basis[ie, je] = True
    raise NonConvergence("transportation simplex exceeded its pivot budget", max_iter, float("nan"))


def _face_has_other_plan(M, p, q, reduced, in_basis) -> bool:
    """Probe the optimal face for a second optimal plan.

    Cells with positive reduced cost are zero on every optimal plan.  If some
    nonbasic zero-reduced-cost cell can carry positive mass on that face,
    the optimum is not unique.
    """
    s, r = M.shape
    tied = (np.abs(reduced) <= 1e-10 * (1 + np.abs(M))) & ~in_basis
    if not tied.any():
        return False
    allowed = (reduced <= 1e-10 * (1 + np.abs(M))).ravel()
    A = np.zeros((s + r, s * r))
    for i in range(s):
        A[i, i * r:(i + 1) * r] = 1.0
    for j in range(r):
        A[s + j, j::r] = 1.0
    bounds = [(0, None) if ok else (0, 0) for ok in allowed]
    res = linprog(-tied.ravel().astype(float), A_eq=A, b_eq=np.concatenate([p, q]),
                  bounds=bounds, method="highs")
    return bool(res.status == 0 and -res.fun > 1e-10)


def exact_wasserstein(M, p, q) -> ExactSolution:
    """Optimal transport cost ``min <M, P>`` over U(p, q) (``lam = 0``).

    Deterministic: the initial basis is the northwest-corner solution and
    pivots follow Bland's lowest-index rule.  ``unique`` is False when the
    optimal face contains more than one plan.
    """
    M = as_matrix(M)
    p, q = as_vector(p), as_vector(q)
    if M.shape != (p.size, q.size):
        raise DimensionMismatch(f"M has shape {M.shape} but p, q have sizes {p.size}, {q.size}")
    x, basis, u, v, reduced, iters = _transport_simplex(M, p, q)
    in_basis = np.zeros(M.shape, dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    x = np.maximum(x, 0.0)
    x /= x.sum()
    unique = not _face_has_other_plan(M, p, q, reduced, in_basis)
    return ExactSolution(TransportPlan(x), float(np.sum(M * x)), unique, u, v, iters)


def certify_optimality(M, P, u, v, tol: float = 1e-10) -> bool:
    """Complementary-slackness certificate for a transportation LP solution.

    Checks dual feasibility ``u_i + v_j <= m_ij`` and equality on the support
    of ``P``.
    """
    M, P = as_matrix(M), np.asarray(P)
    slack = M - np.asarray(u)[:, None] - np.asarray(v)[None, :]
    scale = 1 + np.abs(M)
    return bool(np.all(slack >= -tol * scale) and np.all(np.abs(slack[P > tol]) <= tol * scale[P > tol]))


def discrete_metric(n: int) -> NDArray[np.float64]:
    return 1.0 - np.eye(n)


def exact_lambda0_plans(p, q, M=None) -> tuple[TransportPlan, TransportPlan]:
    """Zero-entropy optimal plans ``P*_0(p, p)`` and ``P*_0(p, q)``.

    ``M`` must have a zero diagonal and positive off-diagonal entries; it
    defaults to the discrete metric.  The first plan is ``diag(p)`` (zero
    cost); the second comes from :func:`exact_wasserstein`.
    """
    p, q = as_vector(p), as_vector(q)
    M = discrete_metric(p.size) if M is None else as_matrix(M)
    return TransportPlan(np.diag(p)), exact_wasserstein(M, p, q).plan


def _constraint_matrix(s, r):
    A = np.zeros((s + r - 1, s * r))
    for i in range(s):
        A[i, i * r:(i + 1) * r] = 1.0
    for j in range(r - 1):          # the last column constraint is implied
        A[s + j, j::r] = 1.0
    return A


def _random_feasible(p, q, rng):
    s, r = p.size, q.size
    vertex, _ = _northwest_corner(p, q, rng.permutation(s), rng.permutation(r))
    t = rng.uniform(0.2, 0.9)
    return (1 - t) * np.outer(p, q) + t * vertex


def _newton_minimize(m, lam, x, A, max_iter=200):
    def F(z):
        return m @ z + lam * np.sum(z * np.log(z))

    fx = F(x)
    for _ in range(max_iter):
        g = m + lam * (np.log(x) + 1.0)
        hinv = x / lam
        S = (A * hinv) @ A.T
        nu = np.linalg.solve(S, -(A * hinv) @ g)
        d = -hinv * (g + A.T @ nu)
        decrement = -g @ d
        if decrement < 1e-24:
            break
        t = 1.0
        neg = d < 0
        if neg.any():
            t = min(1.0, 0.99 * np.min(-x[neg] / d[neg]))
        while True:
            xn = x + t * d
            fn = F(xn)
            if fn <= fx - 0.25 * t * decrement or t < 1e-16:
                break
            t *= 0.5
        x, fx = xn, fn
    return x, fx


def brute_force_entropy_relaxed(M, p, q, lam: float, starts: int = 20, seed: int = 0,
                                return_spread: bool = False):
    """Primal minimizer of ``<M, P> - lam H(P)`` over U(p, q).

    Runs a feasible-direction Newton method (the gradient projected onto the
    marginal constraints in the Hessian metric, with backtracking that keeps
    the iterate positive) from ``starts`` random interior feasible plans and
    keeps the best.  Intended for small problems (up to about 4 x 4).

    With ``return_spread=True`` also returns the spread of the final
    objective values across starts.
    """
    lam = _check_lambda(lam)
    M = as_matrix(M)
    p, q = as_vector(p), as_vector(q)
    s, r = M.shape
    A = _constraint_matrix(s, r)
    rng = np.random.default_rng(seed)
    m = M.ravel()
    results = [_newton_minimize(m, lam, _random_feasible(p, q, rng).ravel(), A)
               for _ in range(starts)]
    values = np.array([f for _, f in results])
    x = results[int(np.argmin(values))][0].reshape(s, r)
    plan = TransportPlan(x / x.sum())
    if return_spread:
        return plan, float(values.max() - values.min())
    return plan

