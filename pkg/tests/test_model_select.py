"""
Tests for BIC scoring and the (lambda, alpha) search.
"""

import math

import numpy as np
import pytest

from magm.core.errors import InvalidInputError
from magm.estimation.model_select import (
    LAMBDA_SEARCH_FLOOR,
    BicRecord,
    _best,
    bic,
    count_enlarged_edges,
    find_lambda_sm,
    grid_from_lambda_sm,
    lambda_grid,
    select,
)
from magm.estimation.admm_solver import AdmmConfig
from magm.estimation.estimator import fit
from magm.estimation.penalty import PenaltySpec
from magm.linalg.block_matrix import BlockMatrix
from magm.simulation.datagen import sample_data


@pytest.fixture
def lasso():
    """Lasso template; lambda is replaced during the search."""
    return PenaltySpec(kind="lasso", lam=1.0)


def test_bic_identity():
    """Test BIC = mp when Sigma = Omega = I."""
    assert bic(BlockMatrix.identity(3, 2), BlockMatrix.identity(3, 2), 100) == pytest.approx(6.0)


def test_bic_diagonal():
    """Test the direct formula with n = e."""
    omega = BlockMatrix(data=np.diag([2.0, 2.0]), p=2, m=1)
    value = bic(BlockMatrix.identity(2, 1), omega, math.e)
    assert value == pytest.approx(4.0 - 2.0 * math.log(2.0))
    assert value == pytest.approx(2.6137, abs=1e-4)


def test_bic_counts_ordered_entries():
    """Test the edge term counts both (i, j) and (j, i)."""
    omega = BlockMatrix(data=[[1.0, 0.2], [0.2, 1.0]], p=2, m=1)
    assert count_enlarged_edges(omega) == 2
    n = 50
    expected = 2.0 - math.log(0.96) + math.log(n) / n
    assert bic(BlockMatrix.identity(2, 1), omega, n) == pytest.approx(expected)


def test_bic_rejects_non_pd():
    """Test an indefinite estimate is an input error."""
    omega = BlockMatrix(data=[[1.0, 2.0], [2.0, 1.0]], p=2, m=1)
    with pytest.raises(InvalidInputError):
        bic(BlockMatrix.identity(2, 1), omega, 10)


def test_grid_bounds():
    """Test lambda_sm = 1 gives bounds (0.05, 0.5) and the grid endpoints are exact."""
    grid = grid_from_lambda_sm(1.0, 15)
    assert (grid.lower, grid.upper) == (pytest.approx(0.05), pytest.approx(0.5))
    assert len(grid.values) == 15
    assert grid.values[0] == grid.lower and grid.values[-1] == grid.upper
    assert np.all(np.diff(grid.values) > 0)
    assert grid_from_lambda_sm(1.0, 2).values == [grid.lower, grid.upper]


def test_lambda_sm_identity_hits_floor(lasso):
    """Test an already diagonal covariance bottoms out at the search floor."""
    assert find_lambda_sm(BlockMatrix.identity(2, 2), lasso, AdmmConfig()) == LAMBDA_SEARCH_FLOOR


def test_lambda_sm_is_the_no_edge_boundary(small_truth, small_sigma, lasso):
    """Test lambda_sm empties the graph while a much smaller lambda does not."""
    if not small_truth.edges_star:
        pytest.skip("ground truth has no edges")
    config = AdmmConfig()
    lambda_sm = find_lambda_sm(small_sigma, lasso, config)
    assert lambda_sm > LAMBDA_SEARCH_FLOOR
    assert fit(small_sigma, lasso.with_lambda(lambda_sm), config).edges == frozenset()
    assert fit(small_sigma, lasso.with_lambda(0.01 * lambda_sm), config).edges


def test_lambda_grid_size_validation(small_sigma, lasso):
    """Test grids need at least two points."""
    with pytest.raises(InvalidInputError):
        lambda_grid(small_sigma, lasso, AdmmConfig(), grid_size=1)


def test_edge_count_shrinks_across_grid(small_truth, lasso):
    """Test the lasso edge count does not increase along an ascending lambda grid."""
    data = sample_data(small_truth, 400, seed=7)
    sigma = BlockMatrix(data=data.T @ data / 400, p=4, m=2)
    config = AdmmConfig(tau_abs=1e-7, tau_rel=1e-7, t_max=2000)
    grid = np.geomspace(0.005, 1.0, 15)
    counts = [len(fit(sigma, lasso.with_lambda(float(lam)), config).edges) for lam in grid]
    assert np.all(np.diff(counts) <= 0)


def test_select_phase_one(small_truth, lasso):
    """Test phase one keeps alpha = 0.05 and the winner has the minimum BIC."""
    data = sample_data(small_truth, 300, seed=11)
    result = select(data, lasso, lambda_grid_size=5, m=2)
    assert result.best_alpha == 0.05
    assert len(result.bic_table) == 5
    best = min(record.bic for record in result.bic_table)
    winner = [r for r in result.bic_table if r.lam == result.best_lambda and r.alpha == result.best_alpha]
    assert winner[0].bic == best
    assert result.best_estimate.penalty.lam == result.best_lambda
    lower, upper = result.lambda_bounds
    assert lower <= result.best_lambda <= upper


def test_select_alpha_grid_of_default_matches_phase_one(small_truth, lasso):
    """Test that alpha_grid = {0.05} adds nothing."""
    data = sample_data(small_truth, 300, seed=11)
    base = select(data, lasso, lambda_grid_size=4, m=2)
    again = select(data, lasso, lambda_grid_size=4, m=2, alpha_grid=[0.05])
    assert again.best_lambda == base.best_lambda
    assert again.best_alpha == base.best_alpha
    assert [r.bic for r in again.bic_table] == [r.bic for r in base.bic_table]


def test_select_two_phase_table(small_truth, lasso):
    """Test phase two adds one row per new alpha at the chosen lambda."""
    data = sample_data(small_truth, 300, seed=11)
    result = select(data, lasso, lambda_grid_size=4, m=2, alpha_grid=[0.01, 0.05, 0.3])
    assert len(result.bic_table) == 6
    phase_two = [r for r in result.bic_table if r.alpha != 0.05]
    assert {r.alpha for r in phase_two} == {0.01, 0.3}
    assert result.best_alpha in {0.01, 0.05, 0.3}


def test_best_tiebreak_prefers_sparser():
    """Test equal BIC values resolve to the larger lambda, then the larger alpha."""
    records = [
        (BicRecord(lam=lam, alpha=alpha, bic=1.0, n_enlarged=0, n_edges=0, converged=True), None)
        for lam in (0.1, 0.2)
        for alpha in (0.05, 0.3)
    ]
    best, _ = _best(records)
    assert (best.lam, best.alpha) == (0.2, 0.3)
    records.append((BicRecord(lam=0.05, alpha=0.05, bic=0.5, n_enlarged=2, n_edges=1, converged=True), None))
    assert _best(records)[0].lam == 0.05


def test_select_needs_sample_size(small_sigma, lasso):
    """Test a covariance input requires n."""
    with pytest.raises(InvalidInputError):
        select(small_sigma, lasso)


def test_bic_table_csv(tmp_path, small_truth, lasso):
    """Test the BIC table file layout."""
    data = sample_data(small_truth, 200, seed=2)
    result = select(data, lasso, lambda_grid_size=3, m=2)
    path = result.write_table_csv(tmp_path / "bic.csv")
    assert path.read_text().splitlines()[0] == "lambda,alpha,bic,n_edges,converged,n_enlarged"
