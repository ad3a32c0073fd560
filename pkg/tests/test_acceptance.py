"""
Full-size recovery runs on p = 100, m = 4 graphs.

These take minutes each and are deselected unless run with ``-m slow``.
"""

import pytest

from magm.harness.experiment import ExperimentConfig, run_synthetic

pytestmark = pytest.mark.slow


def _means(config):
    table = run_synthetic(config, write=False).aggregates()
    return {(row.penalty, row.n, row.metric): row.mean for row in table.itertuples(index=False)}


@pytest.fixture(scope="module")
def er_oracle():
    """Oracle-selected ER runs at n = 400 and 800 for every penalty."""
    config = ExperimentConfig(
        graph_kind="er",
        p_er=0.05,
        p=100,
        m=4,
        n_list=[400, 800],
        runs=10,
        penalties=["lasso", "log-sum", "scad"],
        selection="f1_oracle",
        jobs=4,
    )
    return _means(config)


def test_er_oracle_recovery(er_oracle):
    """Test F1 and Hamming distance at n = 800."""
    assert er_oracle[("lasso", 800, "f1")] >= 0.96
    assert er_oracle[("log-sum", 800, "f1")] >= 0.99
    assert er_oracle[("lasso", 800, "hamming")] <= 20
    assert er_oracle[("log-sum", 800, "hamming")] <= 5


@pytest.mark.parametrize("penalty, expected", [("lasso", 0.266), ("log-sum", 0.170), ("scad", 0.149)])
def test_er_oracle_frobenius(er_oracle, penalty, expected):
    """Test the normalized Frobenius error at n = 800."""
    assert er_oracle[(penalty, 800, "frob_error")] == pytest.approx(expected, abs=0.04)


@pytest.mark.parametrize("n", [400, 800])
def test_er_oracle_ordering(er_oracle, n):
    """Test log-sum recovers at least as well as lasso and SCAD."""
    assert er_oracle[("log-sum", n, "f1")] >= er_oracle[("lasso", n, "f1")]
    assert er_oracle[("log-sum", n, "f1")] >= er_oracle[("scad", n, "f1")]


def test_er_bic_recovery():
    """Test BIC-selected recovery at n = 800."""
    config = ExperimentConfig(
        p_er=0.05, p=100, m=4, n_list=[800], runs=10, penalties=["lasso", "log-sum"], selection="bic", jobs=4
    )
    means = _means(config)
    assert means[("lasso", 800, "f1")] >= 0.93
    assert means[("log-sum", 800, "f1")] >= 0.98


def test_ba_oracle_recovery():
    """Test log-sum recovery on a preferential-attachment graph at n = 800."""
    config = ExperimentConfig(
        graph_kind="ba", mean_degree=2.0, p=100, m=4, n_list=[800], runs=10, penalties=["log-sum"], jobs=4
    )
    assert _means(config)[("log-sum", 800, "f1")] >= 0.95
