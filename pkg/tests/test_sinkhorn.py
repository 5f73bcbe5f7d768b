import math

import numpy as np
import pytest
from conftest import example1_cost, random_cost, random_simplex

from otgeo.errors import InvalidProbability, NonConvergence
from otgeo.oracle import brute_force_entropy_relaxed
from otgeo.simplex import Tolerance, kl_divergence
from otgeo.sinkhorn import (
    Gauge,
    _iterate_linear,
    _iterate_log,
    e_project_cols,
    e_project_rows,
    entropic_objective,
    free_optimal_plan,
    gibbs_kernel,
    marginal_residual,
    mixed_coordinates,
    ras_transform,
    rate_distortion_plan,
    sinkhorn_solve,
)

# (p, q, lam) -> (a, b, c) in the gauge a_2 = b_2 = 1, from the closed form in
# 40-digit arithmetic (tests/oracles.py: example1_scalings)
EXAMPLE1 = [
    ((0.3, 0.6, 1.0), (0.28519565106662592994, 2.5378037607108790955, 0.36201794046923691345)),
    ((0.7, 0.2, 0.5), (12.457288416989926857, 0.053323094539567384448, 0.29785056257602337088)),
    ((0.45, 0.5, 2.0), (0.80781289512622064758, 1.0534663117088554725, 0.33557873805217725836)),
]


class TestGibbsKernel:
    def test_zero_cost_gives_ones(self):
        np.testing.assert_array_equal(gibbs_kernel(np.zeros((2, 3)), 0.7).entries, np.ones((2, 3)))

    def test_example1_epsilon(self):
        eps = math.exp(-1 / 0.4)
        np.testing.assert_allclose(gibbs_kernel(example1_cost(), 0.4).entries, [[1, eps], [eps, 1]], rtol=1e-15)

    def test_small_lambda_no_underflow(self):
        K = gibbs_kernel(example1_cost(), 0.05)
        assert K.log_entries[0, 1] == -20.0
        assert K.entries[0, 1] == pytest.approx(2.061153622438558e-09, rel=1e-15)

    @pytest.mark.parametrize("lam", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_bad_lambda(self, lam):
        with pytest.raises(ValueError):
            gibbs_kernel(example1_cost(), lam)


class TestSolve:
    def test_zero_cost_gives_product(self):
        p, q = np.array([0.3, 0.7]), np.array([0.4, 0.6])
        P, _ = sinkhorn_solve(np.zeros((2, 2)), p, q, 1.0)
        np.testing.assert_allclose(P.entries, np.outer(p, q), atol=1e-12)

    @pytest.mark.parametrize("args,expected", EXAMPLE1)
    def test_example1_scalings(self, args, expected):
        p, q, lam = args
        _, s = sinkhorn_solve(example1_cost(), [p, 1 - p], [q, 1 - q], lam,
                              Tolerance(marginal_tol=1e-14), gauge=Gauge.LAST_ENTRY_ONE)
        np.testing.assert_allclose([s.a[0], s.b[0], s.c], expected, rtol=1e-9)
        np.testing.assert_allclose([s.a[1], s.b[1]], [1.0, 1.0], rtol=0, atol=0)

    def test_random_3x3_matches_brute_force(self, rng):
        M = random_cost(rng, 3)
        p, q = random_simplex(rng, 3), random_simplex(rng, 3)
        P, _ = sinkhorn_solve(M, p, q, 0.5, Tolerance(marginal_tol=1e-12))
        B = brute_force_entropy_relaxed(M, p, q, 0.5)
        np.testing.assert_allclose(P.entries, B.entries, atol=1e-4)

    def test_feasibility_on_random_instances(self, rng):
        for _ in range(500):
            n = int(rng.integers(2, 9))
            lam = float(np.exp(rng.uniform(np.log(0.05), np.log(50))))
            p, q = random_simplex(rng, n, 0.01), random_simplex(rng, n, 0.01)
            P, s = sinkhorn_solve(random_cost(rng, n), p, q, lam)
            assert marginal_residual(P.entries, p, q) <= 1e-9
            assert s.residual <= 1e-9

    def test_rectangular(self, rng):
        p, q = random_simplex(rng, 3), random_simplex(rng, 5)
        P, _ = sinkhorn_solve(random_cost(rng, 3, 5), p, q, 0.3)
        assert P.dims == (3, 5)
        assert marginal_residual(P.entries, p, q) <= 1e-9

    def test_plan_form_identity(self, rng):
        M = random_cost(rng, 4)
        p, q = random_simplex(rng, 4), random_simplex(rng, 4)
        for lam in (0.1, 2.0):
            P, s = sinkhorn_solve(M, p, q, lam)
            K = gibbs_kernel(M, lam).entries
            np.testing.assert_allclose(s.c * s.a[:, None] * s.b[None, :] * K, P.entries, atol=1e-12)

    def test_gauge_invariance(self, rng):
        M = random_cost(rng, 4)
        p, q = random_simplex(rng, 4), random_simplex(rng, 4)
        P1, s1 = sinkhorn_solve(M, p, q, 0.8, gauge=Gauge.SUM_ONE)
        P2, s2 = sinkhorn_solve(M, p, q, 0.8, gauge=Gauge.LAST_ENTRY_ONE)
        np.testing.assert_allclose(P1.entries, P2.entries, atol=1e-12)
        assert s1.a.sum() == pytest.approx(1.0) and s1.b.sum() == pytest.approx(1.0)
        assert s2.a[-1] == 1.0 and s2.b[-1] == 1.0
        K = gibbs_kernel(M, 0.8)
        np.testing.assert_allclose(s1.plan(K), s2.plan(K), atol=1e-12)

    def test_log_and_linear_paths_agree(self, rng):
        M = random_cost(rng, 5)
        p, q = random_simplex(rng, 5), random_simplex(rng, 5)
        logK = -M / 2.0
        tol = Tolerance(marginal_tol=1e-13)
        f1, g1, *_ = _iterate_log(logK, p, q, tol, None)
        f2, g2, *_ = _iterate_linear(np.exp(logK), p, q, tol, None)
        np.testing.assert_allclose(np.exp(f1[:, None] + logK + g1), np.exp(f2[:, None] + logK + g2), atol=1e-13)

    def test_tiny_lambda_stays_finite(self):
        P, _ = sinkhorn_solve(example1_cost(), [0.3, 0.7], [0.6, 0.4], 0.005)
        assert np.all(np.isfinite(P.entries))
        np.testing.assert_allclose(P.entries, [[0.3, 0.0], [0.3, 0.4]], atol=1e-6)

    def test_zero_mass_rows_are_reinserted(self, rng):
        M = random_cost(rng, 3)
        P, s = sinkhorn_solve(M, [0.5, 0.0, 0.5], [0.2, 0.3, 0.5], 0.5)
        np.testing.assert_array_equal(P.entries[1], 0.0)
        assert s.a[1] == 0.0
        assert marginal_residual(P.entries, [0.5, 0.0, 0.5], [0.2, 0.3, 0.5]) <= 1e-9

    def test_nonconvergence_reports_last_iterate(self, rng):
        M = random_cost(rng, 4)
        p, q = random_simplex(rng, 4), random_simplex(rng, 4)
        with pytest.raises(NonConvergence) as err:
            sinkhorn_solve(M, p, q, 0.05, Tolerance(max_iter=2))
        assert err.value.iterations == 2
        assert err.value.residual > 1e-9
        P, s = err.value.result
        assert P.shape == (4, 4) and s.iterations == 2

    def test_nearly_diagonal_kernel_converges(self):
        # plain Sinkhorn contracts by about 1 - 1e-8 per sweep here and stalls above 1e-9
        p = np.array([0.3, 0.7])
        P, s = sinkhorn_solve(example1_cost(), p, p, 0.05)
        assert s.iterations < 1000 and s.residual <= 1e-9
        bf = brute_force_entropy_relaxed(example1_cost(), p, p, 0.05, starts=3)
        np.testing.assert_allclose(P.entries, bf.entries, atol=1e-10)

    def test_newton_stage_respects_iteration_budget(self):
        p = np.array([0.3, 0.7])
        with pytest.raises(NonConvergence) as err:
            sinkhorn_solve(example1_cost(), p, p, 0.05, Tolerance(max_iter=500))
        assert err.value.iterations == 500

    def test_rejects_unnormalized_marginals(self):
        with pytest.raises(InvalidProbability, match="q"):
            sinkhorn_solve(example1_cost(), [0.5, 0.5], [0.5, 0.6], 1.0)


class TestOptimality:
    @staticmethod
    def _feasible_perturbations(P, p, q, rng, count):
        # RAS-perturb the optimum with lognormal noise, then restore the
        # marginals by alternating row/column rescaling (vectorized)
        Q = P[None] * np.exp(rng.normal(scale=rng.uniform(0.01, 1.0, size=(count, 1, 1)), size=(count,) + P.shape))
        for _ in range(500):
            Q *= (p / Q.sum(axis=2))[:, :, None]
            Q *= (q / Q.sum(axis=1))[:, None, :]
        assert np.abs(Q.sum(axis=2) - p).max() < 1e-12
        return Q

    def test_no_random_feasible_plan_beats_sinkhorn(self, rng):
        for _ in range(5):
            M = random_cost(rng, 3)
            p, q = random_simplex(rng, 3), random_simplex(rng, 3)
            lam = float(rng.choice([0.1, 0.5, 2.0]))
            P, _ = sinkhorn_solve(M, p, q, lam, Tolerance(marginal_tol=1e-13))
            f_star = entropic_objective(M, P.entries, lam)
            Q = self._feasible_perturbations(P.entries, p, q, rng, 10_000)
            fQ = (M * Q).sum(axis=(1, 2)) + lam * (Q * np.log(Q)).sum(axis=(1, 2))
            assert f_star <= fQ.min() + 1e-6

    def test_kl_to_optimum_is_monotone(self, rng):
        M = random_cost(rng, 4)
        p, q = random_simplex(rng, 4), random_simplex(rng, 4)
        for lam in (0.2, 3.0):
            P, _ = sinkhorn_solve(M, p, q, lam, Tolerance(marginal_tol=1e-14))
            trail = []
            sinkhorn_solve(M, p, q, lam, Tolerance(marginal_tol=1e-10),
                           callback=lambda X: trail.append(kl_divergence(P.entries, X / X.sum())))
            assert len(trail) > 3
            assert np.all(np.diff(trail) <= 1e-15)


class TestProjections:
    def test_rows_already_feasible_unchanged(self):
        P = np.array([[0.2, 0.1], [0.3, 0.4]])
        np.testing.assert_allclose(e_project_rows(P, [0.3, 0.7]).entries, P, atol=1e-16)

    def test_rows_of_product(self):
        out = e_project_rows(np.outer([0.5, 0.5], [0.4, 0.6]), [0.3, 0.7])
        np.testing.assert_allclose(out.entries, np.outer([0.3, 0.7], [0.4, 0.6]), atol=1e-16)

    def test_rows_exact_on_random(self, rng):
        P = rng.dirichlet(np.ones(12)).reshape(3, 4)
        p = random_simplex(rng, 3)
        np.testing.assert_allclose(e_project_rows(P, p).row_sums, p, atol=1e-15)

    def test_cols(self, rng):
        P = np.array([[0.2, 0.1], [0.3, 0.4]])
        np.testing.assert_allclose(e_project_cols(P, [0.5, 0.5]).entries, P, atol=1e-16)
        out = e_project_cols(np.outer([0.3, 0.7], [0.5, 0.5]), [0.4, 0.6])
        np.testing.assert_allclose(out.entries, np.outer([0.3, 0.7], [0.4, 0.6]), atol=1e-16)
        R = rng.dirichlet(np.ones(12)).reshape(4, 3)
        q = random_simplex(rng, 3)
        np.testing.assert_allclose(e_project_cols(R, q).col_sums, q, atol=1e-15)

    def test_zero_row_rejected(self):
        with pytest.raises(InvalidProbability):
            e_project_rows([[0.0, 0.0], [0.5, 0.5]], [0.5, 0.5])

    def test_pythagorean_decrease(self, rng):
        M = random_cost(rng, 3)
        p, q = random_simplex(rng, 3), random_simplex(rng, 3)
        P_star, _ = sinkhorn_solve(M, p, q, 0.7, Tolerance(marginal_tol=1e-14))
        for _ in range(50):
            P = rng.dirichlet(np.ones(9)).reshape(3, 3)
            assert kl_divergence(P_star.entries, e_project_rows(P, p).entries) <= \
                kl_divergence(P_star.entries, P) + 1e-14


class TestSpecialProblems:
    def test_free_plan_zero_cost_uniform(self):
        np.testing.assert_allclose(free_optimal_plan(np.zeros((3, 3)), 1.0).entries, np.full((3, 3), 1 / 9))

    def test_free_plan_example1(self):
        eps = math.exp(-1 / 0.6)
        np.testing.assert_allclose(free_optimal_plan(example1_cost(), 0.6).entries,
                                   np.array([[1, eps], [eps, 1]]) / (2 + 2 * eps), rtol=1e-14)

    def test_free_plan_is_sinkhorn_fixed_point(self, rng):
        M = random_cost(rng, 3)
        F = free_optimal_plan(M, 0.4)
        P, _ = sinkhorn_solve(M, F.row_sums, F.col_sums, 0.4, Tolerance(marginal_tol=1e-14))
        np.testing.assert_allclose(P.entries, F.entries, atol=1e-13)

    def test_rate_distortion_zero_cost(self):
        p = np.array([0.2, 0.8])
        np.testing.assert_allclose(rate_distortion_plan(np.zeros((2, 3)), p, 1.0).entries,
                                   np.outer(p, np.full(3, 1 / 3)), atol=1e-16)

    def test_rate_distortion_example1(self):
        eps = math.exp(-1 / 0.5)
        P = rate_distortion_plan(example1_cost(), [0.3, 0.7], 0.5).entries
        np.testing.assert_allclose(P, [[0.3 / (1 + eps), 0.3 * eps / (1 + eps)],
                                       [0.7 * eps / (1 + eps), 0.7 / (1 + eps)]], rtol=1e-14)

    def test_rate_distortion_is_projected_free_plan(self, rng):
        for _ in range(20):
            M = random_cost(rng, 4)
            p = random_simplex(rng, 4)
            lam = float(rng.uniform(0.1, 5))
            np.testing.assert_allclose(rate_distortion_plan(M, p, lam).entries,
                                       e_project_rows(free_optimal_plan(M, lam), p).entries, atol=1e-12)


class TestMixedCoordinates:
    def test_product_has_no_interaction(self, rng):
        mc = mixed_coordinates(np.outer(random_simplex(rng, 3), random_simplex(rng, 3)))
        np.testing.assert_allclose(mc.theta, 0.0, atol=1e-14)

    def test_two_by_two(self):
        mc = mixed_coordinates([[0.4, 0.1], [0.1, 0.4]])
        assert mc.theta[0, 0] == pytest.approx(math.log(16), abs=1e-15)
        np.testing.assert_allclose(mc.p.values, [0.5, 0.5])

    def test_random_matches_ratio_formula(self, rng):
        P = rng.dirichlet(np.ones(9)).reshape(3, 3)
        mc = mixed_coordinates(P)
        for i in range(2):
            for j in range(2):
                assert mc.theta[i, j] == pytest.approx(math.log(P[i, j] * P[2, 2] / (P[i, 2] * P[2, j])), abs=1e-13)

    def test_requires_positive_plan(self):
        with pytest.raises(InvalidProbability):
            mixed_coordinates([[0.5, 0.0], [0.0, 0.5]])


class TestRAS:
    def test_unit_scalings(self, rng):
        P = rng.dirichlet(np.ones(9)).reshape(3, 3)
        np.testing.assert_allclose(ras_transform(P, np.ones(3), np.ones(3)).entries, P, atol=1e-16)

    def test_product_stays_product(self, rng):
        P = np.outer(random_simplex(rng, 3), random_simplex(rng, 3))
        out = ras_transform(P, rng.uniform(0.1, 3, 3), rng.uniform(0.1, 3, 3))
        np.testing.assert_allclose(mixed_coordinates(out.entries).theta, 0.0, atol=1e-13)

    def test_interaction_preserved(self, rng):
        P = rng.dirichlet(np.ones(12)).reshape(3, 4)
        theta = mixed_coordinates(P).theta
        out = ras_transform(P, rng.uniform(0.1, 3, 3), rng.uniform(0.1, 3, 4))
        np.testing.assert_allclose(mixed_coordinates(out.entries).theta, theta, atol=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ras_transform(np.full((2, 2), 0.25), [1.0, 0.0], [1.0, 1.0])
