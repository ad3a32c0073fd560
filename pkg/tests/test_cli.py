"""
Tests for the magm command line.
"""

import json
import importlib
import runpy
from pathlib import Path
from unittest.mock import patch

import pandas as pd
import pytest
from typer.testing import CliRunner

from magm import __version__
from magm.cli.main import app
from magm.linalg.serialization import write_matrix
from magm.simulation.datagen import sample_data

runner = CliRunner()


@pytest.fixture
def sigma_file(tmp_path, small_sigma):
    """Covariance of the small ground truth in the matrix CSV format."""
    return write_matrix(small_sigma, tmp_path / "sigma.csv")


@pytest.fixture
def data_file(tmp_path, small_truth):
    """Samples of the small ground truth with a header row."""
    data = sample_data(small_truth, 200, seed=4)
    path = tmp_path / "data.csv"
    pd.DataFrame(data, columns=[f"x{i}" for i in range(data.shape[1])]).to_csv(path, index=False)
    return path


def test_version():
    """Test the version command."""
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


def test_fit_covariance(sigma_file, tmp_path):
    """Test fitting a covariance file writes the estimate bundle."""
    out = tmp_path / "fit"
    result = runner.invoke(app, ["fit", str(sigma_file), "--n", "100", "--lambda", "0.05", "-o", str(out)])
    assert result.exit_code == 0, result.stdout
    payload = json.loads((out / "fit.json").read_text())
    assert payload["lambda"] == 0.05
    assert (out / "fit_edges.tsv").exists()
    assert (out / "fit_omega.csv").exists()


def test_fit_covariance_needs_sample_size(sigma_file, tmp_path):
    """Test a covariance input without --n is an input error."""
    result = runner.invoke(app, ["fit", str(sigma_file), "--lambda", "0.05", "-o", str(tmp_path)])
    assert result.exit_code == 2


def test_fit_missing_file(tmp_path):
    """Test a missing input file is an input error."""
    result = runner.invoke(app, ["fit", str(tmp_path / "nope.csv"), "--lambda", "0.1", "--m", "2"])
    assert result.exit_code == 2


def test_fit_unknown_penalty(data_file, tmp_path):
    """Test an unknown penalty name is rejected."""
    result = runner.invoke(
        app, ["fit", str(data_file), "--m", "2", "--lambda", "0.1", "--penalty", "ridge", "-o", str(tmp_path)]
    )
    assert result.exit_code == 2


def test_select_data(data_file, tmp_path):
    """Test BIC selection from a data file."""
    out = tmp_path / "select"
    result = runner.invoke(app, ["select", str(data_file), "--m", "2", "--grid-size", "3", "-o", str(out)])
    assert result.exit_code == 0, result.stdout
    assert len(pd.read_csv(out / "bic_table.csv")) == 3
    assert (out / "selected.json").exists()


def test_fit_empty_data_file(tmp_path):
    """Test an empty data CSV is a data error."""
    path = tmp_path / "empty.csv"
    path.write_text("")
    result = runner.invoke(app, ["fit", str(path), "--m", "2", "--lambda", "0.1", "-o", str(tmp_path)])
    assert result.exit_code == 2


def test_fit_header_only_data_file(tmp_path):
    """Test a data CSV without sample rows is a data error."""
    path = tmp_path / "header.csv"
    path.write_text("x0,x1\n")
    result = runner.invoke(app, ["fit", str(path), "--m", "2", "--lambda", "0.1", "-o", str(tmp_path)])
    assert result.exit_code == 2


def test_fit_matrix_structure_mismatch(tmp_path):
    """Test a matrix file whose p, m disagree with its body is a data error."""
    path = tmp_path / "sigma.csv"
    path.write_text("rows,cols,p,m\n2,2,3,1\n1,0\n0,1\n")
    result = runner.invoke(app, ["fit", str(path), "--n", "50", "--lambda", "0.1", "-o", str(tmp_path)])
    assert result.exit_code == 2


def test_main_script_runs_cli_once():
    """Test that running main.py as a script invokes the CLI exactly once."""
    script = Path(__file__).resolve().parents[1] / "main.py"
    with patch.object(importlib.import_module("magm.cli.main"), "main") as cli_main:
        runpy.run_path(str(script), run_name="__main__")
    cli_main.assert_called_once_with()


def test_diagnose_convexity(tmp_path):
    """Test the convexity report of a SCAD penalty."""
    result = runner.invoke(app, ["diagnose", "convexity", "--penalty", "scad", "--m", "4", "-o", str(tmp_path)])
    assert result.exit_code == 0, result.stdout
    payload = json.loads((tmp_path / "diagnose_convexity.json").read_text())
    assert payload["mu_bar"] == pytest.approx(0.82158, abs=1e-5)


def test_diagnose_kkt_needs_inputs(tmp_path):
    """Test the KKT check asks for both matrices."""
    result = runner.invoke(app, ["diagnose", "kkt", "-o", str(tmp_path)])
    assert result.exit_code == 2


def test_diagnose_irrep_generated(tmp_path):
    """Test irrepresentability on a generated truth."""
    result = runner.invoke(app, ["diagnose", "irrep", "--p", "3", "--m", "2", "-o", str(tmp_path)])
    assert result.exit_code == 0, result.stdout
    payload = json.loads((tmp_path / "diagnose_irrep.json").read_text())
    assert "lhs_group" in payload


def test_synth_invalid_config(tmp_path):
    """Test an invalid experiment file exits with the validation code."""
    path = tmp_path / "bad.toml"
    path.write_text('selection = "fixed"\n')
    result = runner.invoke(app, ["synth", "--config", str(path)])
    assert result.exit_code == 1


def test_setup_logging_routes_stdlib_records():
    """Test stdlib records reach a loguru sink."""
    import logging

    from magm.core.logging import InterceptHandler, setup_logging

    messages = []
    log = setup_logging(level="WARNING", log_to_file=False)
    sink = log.add(messages.append, level="INFO")
    try:
        logging.getLogger("magm.test").info("routed")
        assert any("routed" in str(message) for message in messages)
        assert any(isinstance(h, InterceptHandler) for h in logging.getLogger().handlers)
    finally:
        log.remove(sink)
