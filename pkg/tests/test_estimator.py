"""
Tests for the outer estimation loop and edge extraction.
"""

import numpy as np
import pytest

from magm.core.errors import InvalidInputError
from magm.estimation.admm_solver import AdmmConfig
from magm.estimation.estimator import (
    extract_edges,
    fit,
    initial_guess,
    oracle_threshold,
    sample_covariance,
)
from magm.estimation.penalty import PenaltySpec
from magm.linalg.block_matrix import BlockMatrix
from magm.simulation.datagen import sample_data


def test_sample_covariance_single_row():
    """Test n=1 gives the outer product."""
    x = np.array([[1.0, 2.0, -1.0, 0.5]])
    sigma = sample_covariance(x, m=2)
    np.testing.assert_allclose(sigma.data, x.T @ x)
    assert (sigma.p, sigma.m) == (2, 2)


def test_sample_covariance_alternating_rows():
    """Test +e1/-e1 rows average to diag(1, 0, ...)."""
    e1 = np.array([1.0, 0.0, 0.0])
    x = np.vstack([e1, -e1, e1, -e1])
    np.testing.assert_allclose(sample_covariance(x, m=1).data, np.diag([1.0, 0.0, 0.0]))


def test_sample_covariance_errors():
    """Test empty data and a column count that is not a multiple of m."""
    with pytest.raises(InvalidInputError):
        sample_covariance(np.zeros((0, 4)), m=2)
    with pytest.raises(InvalidInputError):
        sample_covariance(np.ones((3, 5)), m=2)


def test_initial_guess():
    """Test the inverse diagonal initialization."""
    assert np.array_equal(initial_guess(BlockMatrix.identity(2, 2)).data, np.eye(4))
    with pytest.raises(InvalidInputError):
        initial_guess(BlockMatrix(data=np.diag([1.0, 0.0]), p=2, m=1))


def test_extract_edges():
    """Test edges of diagonal and single-block matrices."""
    assert extract_edges(BlockMatrix.identity(4, 2)) == frozenset()
    data = np.eye(8)
    data[2, 6] = data[6, 2] = 0.3
    omega = BlockMatrix(data=data, p=4, m=2)
    assert extract_edges(omega) == frozenset({(1, 3)})
    assert extract_edges(omega, theta=1.0) == frozenset()


def test_oracle_threshold(small_truth):
    """Test half the weakest true block norm."""
    assert oracle_threshold(small_truth.omega_star, frozenset()) == 0.0
    if small_truth.edges_star:
        theta = oracle_threshold(small_truth.omega_star, small_truth.edges_star)
        assert theta > 0.0
        assert extract_edges(small_truth.omega_star, theta) == small_truth.edges_star


def test_lasso_runs_one_solve(small_sigma):
    """Test that lasso ignores extra LLA rounds."""
    estimate = fit(small_sigma, PenaltySpec(kind="lasso", lam=0.05), lla_rounds=3)
    assert estimate.lla_rounds == 1
    assert len(estimate.solver_results) == 1


def test_log_sum_runs_two_solves_by_default(small_sigma):
    """Test the default number of LLA rounds."""
    estimate = fit(small_sigma, PenaltySpec(kind="log-sum", lam=0.05, epsilon=0.05))
    assert 1 <= estimate.lla_rounds <= 2
    assert len(estimate.solver_results) == estimate.lla_rounds


def test_fit_from_data_matches_covariance(small_truth):
    """Test that data and its covariance give the same estimate."""
    data = sample_data(small_truth, 200, seed=1)
    spec = PenaltySpec(kind="lasso", lam=0.1)
    from_data = fit(data, spec, m=2)
    from_cov = fit(sample_covariance(data, 2), spec, n_samples=200)
    np.testing.assert_allclose(from_data.omega_hat.data, from_cov.omega_hat.data)
    assert from_data.n_samples == 200
    with pytest.raises(InvalidInputError):
        fit(data, spec)


def test_fit_identity_is_empty():
    """Test an uncorrelated covariance gives no edges and Omega = I."""
    estimate = fit(BlockMatrix.identity(3, 2), PenaltySpec(kind="scad", lam=0.1))
    assert estimate.edges == frozenset()
    np.testing.assert_allclose(estimate.omega_hat.data, np.eye(6), atol=1e-8)
    assert estimate.converged


def test_fit_is_permutation_equivariant(small_truth, small_sigma):
    """Test that relabeling nodes relabels the edges."""
    order = [2, 0, 3, 1]
    columns = np.concatenate([np.arange(k * 2, k * 2 + 2) for k in order])
    permuted = small_sigma.with_data(small_sigma.data[np.ix_(columns, columns)])
    spec = PenaltySpec(kind="lasso", lam=0.03)
    config = AdmmConfig(tau_abs=1e-8, tau_rel=1e-8, t_max=3000)
    base = fit(small_sigma, spec, config, theta=1e-4)
    moved = fit(permuted, spec, config, theta=1e-4)
    relabeled = frozenset(
        (min(order[q], order[l]), max(order[q], order[l])) for q, l in moved.edges
    )
    assert relabeled == base.edges


def test_estimate_exports(small_sigma):
    """Test the JSON summary and the enlarged edge list."""
    estimate = fit(small_sigma, PenaltySpec(kind="lasso", lam=0.02))
    payload = estimate.to_json_dict(labels=["a", "b", "c", "d"])
    assert payload["p"] == 4 and payload["m"] == 2
    assert payload["penalty"] == "lasso"
    assert len(payload["edges"]) == len(estimate.edges)
    for i, j in estimate.enlarged_edges():
        assert i != j
        assert abs(estimate.omega_hat.data[i, j]) > 1e-10
