from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_simplex(rng, n, floor=0.02):
    """Dirichlet draw kept away from the boundary so solves stay well conditioned."""
    v = rng.dirichlet(np.ones(n)) + floor
    return v / v.sum()


def random_cost(rng, s, r=None):
    r = s if r is None else r
    return rng.uniform(0.0, 2.0, size=(s, r))


def planar_metric(rng, n):
    """Euclidean distances of random planar points: zero diagonal, strictly subadditive."""
    X = rng.normal(size=(n, 2))
    return np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))


def example1_cost():
    return np.array([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
