import numpy as np
import pytest
from conftest import example1_cost, planar_metric, random_cost, random_simplex
from oracles import lp_by_vertex_enumeration

from otgeo.errors import DimensionMismatch
from otgeo.geometry import cuturi_function
from otgeo.oracle import (
    brute_force_entropy_relaxed,
    certify_optimality,
    discrete_metric,
    exact_lambda0_plans,
    exact_wasserstein,
)
from otgeo.simplex import Tolerance, transport_cost
from otgeo.sinkhorn import sinkhorn_solve

TIGHT = Tolerance(marginal_tol=1e-13)


class TestExactWasserstein:
    @pytest.mark.parametrize("p,q", [(0.3, 0.6), (0.9, 0.1), (0.5, 0.5), (0.25, 0.75)])
    def test_example1_family(self, p, q):
        sol = exact_wasserstein(example1_cost(), [p, 1 - p], [q, 1 - q])
        assert sol.cost == pytest.approx(abs(p - q), abs=1e-15)

    def test_identical_marginals_give_diagonal(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        sol = exact_wasserstein(discrete_metric(4), p, p)
        np.testing.assert_allclose(sol.plan.entries, np.diag(p), atol=1e-15)
        assert sol.cost == 0.0

    def test_frozen_lp_value(self):
        M = [[0, 2, 5], [3, 0, 1], [4, 1, 0]]
        sol = exact_wasserstein(M, [0.2, 0.5, 0.3], [0.4, 0.1, 0.5])
        assert sol.cost == pytest.approx(0.8, abs=1e-14)

    def test_matches_vertex_enumeration(self, rng):
        for _ in range(30):
            s, r = int(rng.integers(2, 4)), int(rng.integers(2, 4))
            M = random_cost(rng, s, r)
            p, q = random_simplex(rng, s), random_simplex(rng, r)
            sol = exact_wasserstein(M, p, q)
            assert sol.cost == pytest.approx(lp_by_vertex_enumeration(M, p, q), abs=1e-12)
            np.testing.assert_allclose(sol.plan.row_sums, p, atol=1e-13)
            np.testing.assert_allclose(sol.plan.col_sums, q, atol=1e-13)

    def test_certificate(self, rng):
        for _ in range(20):
            M = random_cost(rng, 4, 5)
            sol = exact_wasserstein(M, random_simplex(rng, 4), random_simplex(rng, 5))
            assert certify_optimality(M, sol.plan.entries, sol.u, sol.v)

    def test_certificate_rejects_suboptimal(self):
        M = example1_cost()
        P = np.full((2, 2), 0.25)
        assert not certify_optimality(M, P, [0.0, 0.0], [0.0, 0.0])

    def test_uniqueness_flag(self):
        assert exact_wasserstein(example1_cost(), [0.3, 0.7], [0.6, 0.4]).unique
        # zero cost: every feasible plan is optimal
        assert not exact_wasserstein(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5]).unique

    def test_deterministic(self, rng):
        M = random_cost(rng, 4)
        p, q = random_simplex(rng, 4), random_simplex(rng, 4)
        a, b = exact_wasserstein(M, p, q), exact_wasserstein(M, p, q)
        np.testing.assert_array_equal(a.plan.entries, b.plan.entries)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            exact_wasserstein(np.zeros((2, 3)), [0.5, 0.5], [0.5, 0.5])


class TestLambdaZeroPlans:
    def test_diagonal_is_pointwise_min(self, rng):
        for M in (discrete_metric(4), planar_metric(rng, 4)):
            for _ in range(20):
                p, q = random_simplex(rng, 4), random_simplex(rng, 4)
                same, cross = exact_lambda0_plans(p, q, M)
                np.testing.assert_array_equal(same.entries, np.diag(p))
                np.testing.assert_allclose(np.diag(cross.entries), np.minimum(p, q), atol=1e-14)


class TestBruteForce:
    def test_zero_cost_gives_product(self, rng):
        p, q = random_simplex(rng, 3), random_simplex(rng, 3)
        plan = brute_force_entropy_relaxed(np.zeros((3, 3)), p, q, 0.5, starts=3)
        np.testing.assert_allclose(plan.entries, np.outer(p, q), atol=1e-9)

    def test_agrees_with_sinkhorn(self, rng):
        for lam in (0.1, 1.0):
            M = random_cost(rng, 3)
            p, q = random_simplex(rng, 3), random_simplex(rng, 3)
            bf, spread = brute_force_entropy_relaxed(M, p, q, lam, starts=5, return_spread=True)
            sk, _ = sinkhorn_solve(M, p, q, lam, TIGHT)
            np.testing.assert_allclose(bf.entries, sk.entries, atol=1e-8)
            assert spread <= 1e-10


class TestLambdaInterpolation:
    def test_cost_decreases_to_wasserstein(self, rng):
        M = planar_metric(rng, 3)
        p, q = random_simplex(rng, 3), random_simplex(rng, 3)
        exact = exact_wasserstein(M, p, q).cost
        costs = [transport_cost(M, sinkhorn_solve(M, p, q, lam, TIGHT)[0].entries) for lam in (1.0, 0.3, 0.1, 0.03)]
        assert all(a > b for a, b in zip(costs, costs[1:]))
        assert costs[-1] >= exact - 1e-10
        assert costs[-1] - exact < 0.05 * (costs[0] - exact)

    def test_cuturi_function_is_not_a_metric(self):
        M, p = example1_cost(), np.array([0.3, 0.7])
        q = np.array([0.41, 0.59])
        assert cuturi_function(M, p, q, 1.0) < cuturi_function(M, p, p, 1.0)
