"""Probability vectors, cost matrices and transport plans.

Everything here works in nats (natural logarithms).  The container types are
thin, immutable wrappers around float64 numpy arrays; every public function
in the package also accepts plain array-likes in their place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, InvalidProbability, SupportViolation

SUM_TOL = 1e-12


def _frozen(x: ArrayLike, ndim: int, name: str) -> NDArray[np.float64]:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        raise InvalidProbability("non-finite entry", name, tuple(int(i) for i in bad[0]))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProbabilityVector:
    """A point of the probability simplex.

    By default every entry must be strictly positive (the open simplex).
    ``closed=True`` admits zeros, which is what marginals of sparse plans
    and the exact (zero-entropy) solutions need.  With ``renormalize=True``
    the values are divided by their sum; the relative correction is kept in
    ``correction`` so callers can report it.
    """

    values: NDArray[np.float64]
    closed: bool = False
    renormalize: bool = field(default=False, repr=False, compare=False)
    correction: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self):
        v = _frozen(self.values, 1, "probability vector")
        if v.size < 2:
            raise InvalidProbability(f"need at least 2 entries, got {v.size}")
        neg = np.flatnonzero(v < 0) if self.closed else np.flatnonzero(v <= 0)
        if neg.size:
            i = int(neg[0])
            bound = ">= 0" if self.closed else "> 0"
            raise InvalidProbability(f"entry {v[i]!r} violates {bound}", "probability vector", i)
        total = float(v.sum())
        dev = total - 1.0
        if self.renormalize and dev != 0.0:
            v = v / total
            v.setflags(write=False)
        elif abs(dev) > SUM_TOL:
            raise InvalidProbability(f"entries sum to {total!r}, not 1 (tolerance {SUM_TOL:g})",
                                     "probability vector")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "correction", dev)

    @classmethod
    def closure(cls, values: ArrayLike, renormalize: bool = False) -> ProbabilityVector:
        return cls(values, closed=True, renormalize=renormalize)

    @classmethod
    def uniform(cls, n: int) -> ProbabilityVector:
        return cls(np.full(n, 1.0 / n))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative, finite transport costs ``m_ij`` (rows: senders)."""

    entries: NDArray[np.float64]

    def __post_init__(self):
        m = _frozen(self.entries, 2, "M")
        neg = np.argwhere(m < 0)
        if neg.size:
            i, j = (int(k) for k in neg[0])
            raise InvalidProbability(f"cost {m[i, j]!r} is negative", "M", (i, j))
        object.__setattr__(self, "entries", m)

    @property
    def dims(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class TransportPlan:
    """A joint distribution over sender x receiver terminals."""

    entries: NDArray[np.float64]

    def __post_init__(self):
        P = _frozen(self.entries, 2, "plan")
        neg = np.argwhere(P < 0)
        if neg.size:
            i, j = (int(k) for k in neg[0])
            raise InvalidProbability(f"mass {P[i, j]!r} is negative", "plan", (i, j))
        total = float(P.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise InvalidProbability(f"entries sum to {total!r}, not 1", "plan")
        object.__setattr__(self, "entries", P)

    @property
    def dims(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def row_sums(self) -> NDArray[np.float64]:
        return self.entries.sum(axis=1)

    @property
    def col_sums(self) -> NDArray[np.float64]:
        return self.entries.sum(axis=0)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True)
class Tolerance:
    """Stopping rule for iterative solvers.

    ``marginal_tol`` bounds the L1 error of both marginals, ``value_tol`` the
    first-order residual of the outer optimizers (barycenters).
    """

    marginal_tol: float = 1e-9
    max_iter: int = 100_000
    value_tol: float = 1e-8

    def __post_init__(self):
        if not self.marginal_tol > 0:
            raise ValueError(f"marginal_tol must be > 0, got {self.marginal_tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.value_tol > 0:
            raise ValueError(f"value_tol must be > 0, got {self.value_tol}")


def as_vector(p) -> NDArray[np.float64]:
    return np.asarray(p, dtype=np.float64)


def as_matrix(m) -> NDArray[np.float64]:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {arr.shape}")
    return arr


def _xlogx(x: NDArray[np.float64]) -> NDArray[np.float64]:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy(P) -> float:
    """Shannon entropy ``-sum P log P`` in nats, with ``0 log 0 = 0``.

    Works for plans and for probability vectors alike.
    """
    return float(-_xlogx(np.asarray(P, dtype=np.float64)).sum())


def kl_divergence(P, Q) -> float:
    """``sum P log(P/Q)``; raises :class:`SupportViolation` if Q is 0 where P is not."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.shape != Q.shape:
        raise DimensionMismatch(f"shapes differ: {P.shape} vs {Q.shape}")
    pos = P > 0
    bad = np.argwhere(pos & (Q <= 0))
    if bad.size:
        raise SupportViolation(f"Q vanishes at {tuple(int(i) for i in bad[0])} where P > 0")
    return float(np.sum(P[pos] * (np.log(P[pos]) - np.log(Q[pos]))))


def product_plan(p, q) -> TransportPlan:
    """The independent coupling ``p ⊗ q``, the entropy maximizer of U(p, q)."""
    return TransportPlan(np.outer(as_vector(p), as_vector(q)))


def marginals(P) -> tuple[ProbabilityVector, ProbabilityVector]:
    """Row sums and column sums of a plan, as closed-simplex points."""
    P = np.asarray(P, dtype=np.float64)
    return (ProbabilityVector.closure(P.sum(axis=1)),
            ProbabilityVector.closure(P.sum(axis=0)))


def transport_cost(M, P) -> float:
    """``<M, P>``"""
    return float(np.sum(as_matrix(M) * np.asarray(P, dtype=np.float64)))
