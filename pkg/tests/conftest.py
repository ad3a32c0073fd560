"""
Shared fixtures for the magm test suite.
"""

import numpy as np
import pytest

from magm.estimation.admm_solver import AdmmConfig
from magm.linalg.block_matrix import BlockMatrix
from magm.simulation.datagen import GraphKind, generate_truth


@pytest.fixture
def rng():
    """Deterministic random generator."""
    return np.random.default_rng(12345)


@pytest.fixture
def tight_config():
    """ADMM constants tight enough for optimality checks."""
    return AdmmConfig(tau_abs=1e-8, tau_rel=1e-8, t_max=5000)


@pytest.fixture
def small_truth():
    """Ground truth with p=4 nodes, m=2 attributes and an ER graph."""
    return generate_truth(GraphKind.er(0.5), p=4, m=2, seed=3)


@pytest.fixture
def small_sigma(small_truth):
    """Exact covariance of the small ground truth."""
    return small_truth.omega_star.with_data(small_truth.sigma_star)


def random_spd(rng, p, m, scale=1.0):
    """Random symmetric positive definite block matrix."""
    a = rng.standard_normal((p * m, p * m))
    return BlockMatrix(data=scale * (a @ a.T / (p * m) + np.eye(p * m)), p=p, m=m)


@pytest.fixture
def make_spd(rng):
    """Factory for random SPD block matrices drawn from the shared generator."""

    def make(p, m, scale=1.0):
        return random_spd(rng, p, m, scale)

    return make
