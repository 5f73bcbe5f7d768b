import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otgeo.errors import DimensionMismatch, InvalidProbability, SupportViolation
from otgeo.simplex import (
    CostMatrix,
    ProbabilityVector,
    Tolerance,
    TransportPlan,
    entropy,
    kl_divergence,
    marginals,
    product_plan,
    transport_cost,
)

# extended-precision values from tests/oracles.py
ENTROPY_2X2 = 1.1682824501765626015
KL_3X3 = 0.17907954138230575128
KL_P = np.array([[0.10, 0.05, 0.15], [0.20, 0.05, 0.05], [0.05, 0.25, 0.10]])
KL_Q = np.array([[0.12, 0.08, 0.10], [0.10, 0.10, 0.10], [0.08, 0.12, 0.20]])


class TestProbabilityVector:
    def test_accepts_interior_point(self):
        p = ProbabilityVector([0.25, 0.75])
        np.testing.assert_array_equal(np.asarray(p), [0.25, 0.75])
        assert len(p) == 2

    def test_rejects_zero_entry_unless_closed(self):
        with pytest.raises(InvalidProbability, match=r"\[1\]"):
            ProbabilityVector([1.0, 0.0])
        assert ProbabilityVector.closure([1.0, 0.0]).values[1] == 0.0

    def test_rejects_negative_even_when_closed(self):
        with pytest.raises(InvalidProbability):
            ProbabilityVector.closure([1.2, -0.2])

    def test_sum_tolerance(self):
        ProbabilityVector([0.5, 0.5 + 5e-13])
        with pytest.raises(InvalidProbability, match="sum"):
            ProbabilityVector([0.5, 0.5000001])

    def test_renormalize_records_correction(self):
        p = ProbabilityVector([0.5, 0.5000001], renormalize=True)
        assert math.isclose(p.values.sum(), 1.0, abs_tol=1e-15)
        assert p.correction == pytest.approx(1e-7)

    def test_rejects_nonfinite_and_short(self):
        with pytest.raises(InvalidProbability):
            ProbabilityVector([np.nan, 1.0])
        with pytest.raises(InvalidProbability):
            ProbabilityVector([1.0])

    def test_immutable(self):
        p = ProbabilityVector.uniform(4)
        with pytest.raises(ValueError):
            p.values[0] = 1.0


class TestContainers:
    def test_cost_matrix_names_negative_cell(self):
        with pytest.raises(InvalidProbability, match=r"M\[1, 0\]"):
            CostMatrix([[0.0, 1.0], [-1.0, 0.0]])

    def test_cost_matrix_rejects_inf(self):
        with pytest.raises(InvalidProbability):
            CostMatrix([[0.0, np.inf], [1.0, 0.0]])

    def test_plan_sums_and_dims(self):
        P = TransportPlan([[0.1, 0.2, 0.1], [0.3, 0.2, 0.1]])
        assert P.dims == (2, 3)
        np.testing.assert_allclose(P.row_sums, [0.4, 0.6])
        np.testing.assert_allclose(P.col_sums, [0.4, 0.4, 0.2])

    def test_plan_must_be_normalized(self):
        with pytest.raises(InvalidProbability):
            TransportPlan([[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(DimensionMismatch):
            TransportPlan([0.5, 0.5])

    def test_tolerance_invariants(self):
        with pytest.raises(ValueError):
            Tolerance(marginal_tol=0.0)
        with pytest.raises(ValueError):
            Tolerance(max_iter=0)


class TestEntropy:
    def test_point_mass(self):
        assert entropy([[1.0, 0.0], [0.0, 0.0]]) == 0.0

    def test_uniform_is_log4(self):
        assert entropy(np.full((2, 2), 0.25)) == pytest.approx(math.log(4), abs=1e-15)

    def test_matches_extended_precision(self):
        assert entropy([[0.5, 0.1], [0.1, 0.3]]) == pytest.approx(ENTROPY_2X2, abs=1e-15)

    def test_bounds(self, rng):
        for _ in range(100):
            P = rng.dirichlet(np.ones(12)).reshape(3, 4)
            assert 0 <= entropy(P) <= math.log(12) + 1e-12


class TestKL:
    def test_self_is_zero(self):
        assert kl_divergence(KL_P, KL_P) == 0.0

    def test_matches_extended_precision(self):
        assert kl_divergence(KL_P, KL_Q) == pytest.approx(KL_3X3, abs=1e-15)

    def test_product_reduces_to_marginal_kl(self):
        p, q = np.array([0.2, 0.3, 0.5]), np.array([0.4, 0.4, 0.2])
        assert kl_divergence(np.outer(p, p), np.outer(p, q)) == pytest.approx(kl_divergence(p, q), abs=1e-14)

    def test_support_violation(self):
        with pytest.raises(SupportViolation, match=r"\(0, 1\)"):
            kl_divergence([[0.5, 0.5], [0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]])

    def test_zero_where_p_is_zero_is_fine(self):
        assert kl_divergence([[1.0, 0.0]], [[0.5, 0.5]]) == pytest.approx(math.log(2))

    @given(arrays(np.float64, 6, elements=st.floats(0.01, 1.0)),
           arrays(np.float64, 6, elements=st.floats(0.01, 1.0)))
    def test_nonnegative(self, a, b):
        P, Q = a / a.sum(), b / b.sum()
        assert kl_divergence(P, Q) >= -1e-15


class TestProductAndMarginals:
    def test_uniform_product(self):
        np.testing.assert_array_equal(product_plan([0.5, 0.5], [0.5, 0.5]).entries, np.full((2, 2), 0.25))

    def test_direct_product(self):
        np.testing.assert_allclose(product_plan([0.3, 0.7], [0.4, 0.6]).entries,
                                   [[0.12, 0.18], [0.28, 0.42]], atol=1e-16)

    def test_product_entropy_additive(self, rng):
        for _ in range(20):
            p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(3))
            assert entropy(product_plan(p, q)) == pytest.approx(entropy(p) + entropy(q), abs=1e-13)

    def test_marginals_of_product_and_diagonal(self):
        p, q = np.array([0.3, 0.7]), np.array([0.4, 0.6])
        rp, rq = marginals(product_plan(p, q))
        np.testing.assert_allclose(rp.values, p, atol=1e-16)
        np.testing.assert_allclose(rq.values, q, atol=1e-16)
        dp, dq = marginals(np.diag(p))
        np.testing.assert_array_equal(dp.values, p)
        np.testing.assert_array_equal(dq.values, p)

    def test_marginals_match_fsum(self, rng):
        P = rng.dirichlet(np.ones(20)).reshape(4, 5)
        rows, cols = marginals(P)
        np.testing.assert_allclose(rows.values, [math.fsum(r) for r in P], atol=1e-16)
        np.testing.assert_allclose(cols.values, [math.fsum(c) for c in P.T], atol=1e-16)

    def test_sparse_plan_marginals_are_closure_points(self):
        rows, _ = marginals([[1.0, 0.0], [0.0, 0.0]])
        assert rows.closed and rows.values[1] == 0.0

    def test_transport_cost(self):
        assert transport_cost([[0, 1], [1, 0]], [[0.4, 0.1], [0.2, 0.3]]) == pytest.approx(0.3)


class TestInformationInequalities:
    def test_entropy_subadditive_on_random_plans(self, rng):
        for _ in range(1000):
            P = rng.dirichlet(np.full(9, 0.5)).reshape(3, 3)
            p, q = P.sum(axis=1), P.sum(axis=0)
            assert entropy(P) <= entropy(p) + entropy(q) + 1e-12

    def test_mutual_information_identity(self, rng):
        for _ in range(200):
            P = rng.dirichlet(np.ones(12)).reshape(3, 4)
            p, q = P.sum(axis=1), P.sum(axis=0)
            lhs = kl_divergence(P, np.outer(p, q))
            assert lhs == pytest.approx(entropy(p) + entropy(q) - entropy(P), abs=1e-10)
