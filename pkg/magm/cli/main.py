"""
Main CLI interface for magm.
"""

import functools
import json
import math
from enum import Enum
from pathlib import Path
from typing import List, Optional

import pandas as pd
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from magm.config.settings import get_config
from magm.core.errors import InvalidInputError, MagmError
from magm.core.logging import setup_logging
from magm.diagnostics.theory_checks import (
    convexity_threshold,
    hessian_convexity_check,
    in_convexity_region,
    irrepresentability,
    kkt_residual,
    tail_bound_check,
)
from magm.estimation.admm_solver import write_trace_csv
from magm.estimation.estimator import extract_edges, fit
from magm.estimation.model_select import DEFAULT_ALPHA_GRID, select
from magm.estimation.penalty import PenaltyKind, PenaltySpec, amenability_mu
from magm.harness.experiment import EstimationSettings, ExperimentConfig, load_config, run_synthetic
from magm.harness.ingest import ingest_csv
from magm.harness.real_data import make_fixture_prices, run_real
from magm.harness.reports import write_estimate, write_json
from magm.linalg.serialization import CSV_HEADER, MAGIC, read_matrix, write_matrix
from magm.simulation.datagen import GraphKind, generate_truth

app = typer.Typer(help="Multi-attribute Gaussian graphical model estimation")
console = Console()


class DiagnoseMode(str, Enum):
    KKT = "kkt"
    CONVEXITY = "convexity"
    TAIL = "tail"
    IRREP = "irrep"


def handle_errors(command):
    """Print magm and validation errors and exit with their code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            console.print(f"[bold red]Invalid configuration:[/bold red] {e}")
            raise typer.Exit(code=1)
        except MagmError as e:
            console.print(f"[bold red]Error:[/bold red] {e}")
            raise typer.Exit(code=e.exit_code)

    return wrapper


def _output_dir(output_dir: Optional[Path]) -> Path:
    return output_dir or get_config().data_dir / "results"


def _load_input(path: Path, m: Optional[int], n: Optional[int]):
    """
    Return (source, m, n) for a matrix file (covariance) or a data CSV.

    Matrix files are recognised by the MAGM magic or the matrix CSV header;
    anything else is read as a sample table with a header row, keeping its
    numeric columns.
    """
    if not path.exists():
        raise InvalidInputError("input file not found", path=str(path))
    with path.open("rb") as handle:
        head = handle.read(len(CSV_HEADER))
    if head[:4] == MAGIC or head.decode("utf-8", errors="ignore") == CSV_HEADER:
        sigma = read_matrix(path)
        if n is None:
            raise InvalidInputError("--n is required with a covariance input")
        return sigma, sigma.m, n
    if m is None:
        raise InvalidInputError("--m is required with a data CSV")
    try:
        data = pd.read_csv(path).select_dtypes("number").to_numpy(dtype=float)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidInputError("cannot read data CSV", path=str(path), reason=str(e)) from e
    if data.size == 0:
        raise InvalidInputError("data CSV has no numeric samples", path=str(path))
    return data, m, data.shape[0]


def _settings(config_path: Optional[Path], model=EstimationSettings, **overrides):
    if config_path is not None:
        return load_config(config_path, model=model, **overrides)
    return model.model_validate({key: value for key, value in overrides.items() if value is not None})


@app.command()
@handle_errors
def synth(
    config_path: Path = typer.Option(..., "--config", "-c", help="Experiment TOML file"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j", help="Worker processes"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o", help="Result directory"),
    penalty: Optional[List[str]] = typer.Option(None, "--penalty", help="Penalty (repeatable)"),
):
    """Run a synthetic recovery experiment."""
    config = load_config(
        config_path, ExperimentConfig, seed=seed, jobs=jobs, output_dir=output_dir, penalties=penalty or None
    )
    result = run_synthetic(config)

    table = Table(title="Mean (std) over runs")
    for column in ["penalty", "n", "graph", "metric", "mean", "std"]:
        table.add_column(column)
    for row in result.aggregates().itertuples(index=False):
        std = "-" if math.isnan(row.std) else f"{row.std:.4f}"
        table.add_row(row.penalty, str(row.n), row.graph, row.metric, f"{row.mean:.4f}", std)
    console.print(table)
    if result.failures:
        console.print(f"[yellow]{len(result.failures)} run(s) failed[/yellow]")
    console.print(f"Results written to [bold]{config.output_dir}[/bold]")


@app.command("fit")
@handle_errors
def fit_command(
    input_path: Path = typer.Argument(..., help="Covariance matrix file or data CSV"),
    m: Optional[int] = typer.Option(None, "--m", help="Attributes per node (data CSV)"),
    n: Optional[int] = typer.Option(None, "--n", help="Sample size (covariance input)"),
    penalty: str = typer.Option("lasso", "--penalty", help="lasso, log-sum or scad"),
    lam: float = typer.Option(..., "--lambda", help="Regularization level"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Element vs group balance"),
    theta: Optional[float] = typer.Option(None, "--theta", help="Edge threshold"),
    config_path: Optional[Path] = typer.Option(None, "--config", "-c", help="Settings TOML file"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o"),
    binary: bool = typer.Option(False, "--binary", help="Write omega_hat in the binary format"),
    trace: bool = typer.Option(False, "--trace", help="Write the ADMM convergence trace"),
):
    """Estimate one graph at a fixed lambda."""
    settings = _settings(config_path, alpha=alpha, theta=theta, output_dir=output_dir)
    source, m, n = _load_input(input_path, m, n)
    spec = settings.penalty_spec(PenaltyKind.parse(penalty), lam)
    estimate = fit(
        source, spec, settings.admm, settings.lla_rounds, m=m, theta=settings.theta, n_samples=n, record_trace=trace
    )
    write_estimate(estimate, settings.output_dir, prefix="fit", binary=binary)
    if trace:
        for i, result in enumerate(estimate.solver_results):
            write_trace_csv(result, Path(settings.output_dir) / f"fit_trace_{i}.csv")
    status = "converged" if estimate.converged else "[yellow]not converged[/yellow]"
    console.print(f"{len(estimate.edges)} edges ({status}); outputs in [bold]{settings.output_dir}[/bold]")


@app.command("select")
@handle_errors
def select_command(
    input_path: Path = typer.Argument(..., help="Covariance matrix file or data CSV"),
    m: Optional[int] = typer.Option(None, "--m", help="Attributes per node (data CSV)"),
    n: Optional[int] = typer.Option(None, "--n", help="Sample size (covariance input)"),
    penalty: str = typer.Option("lasso", "--penalty"),
    alpha_grid: Optional[List[float]] = typer.Option(None, "--alpha", help="Phase-two alpha values (repeatable)"),
    two_phase: bool = typer.Option(False, "--two-phase", help="Scan the default alpha grid after lambda"),
    grid_size: Optional[int] = typer.Option(None, "--grid-size", help="Number of lambda values"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j"),
    config_path: Optional[Path] = typer.Option(None, "--config", "-c"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o"),
):
    """Pick (lambda, alpha) by BIC."""
    settings = _settings(
        config_path, lambda_grid_size=grid_size, theta=theta, jobs=jobs, output_dir=output_dir
    )
    source, m, n = _load_input(input_path, m, n)
    alphas = alpha_grid or (list(DEFAULT_ALPHA_GRID) if two_phase else settings.alpha_grid)
    result = select(
        source,
        settings.penalty_spec(PenaltyKind.parse(penalty)),
        settings.admm,
        lambda_grid_size=settings.lambda_grid_size,
        alpha_grid=alphas,
        m=m,
        n=n,
        lla_rounds=settings.lla_rounds,
        jobs=settings.jobs,
    )
    out = Path(settings.output_dir)
    result.write_table_csv(out / "bic_table.csv")
    estimate = result.best_estimate
    if settings.theta > 0.0:
        estimate = estimate.model_copy(
            update={"theta": settings.theta, "edges": extract_edges(estimate.omega_hat, settings.theta)}
        )
    write_estimate(estimate, out, prefix="selected")
    console.print(
        f"lambda=[bold]{result.best_lambda:.4g}[/bold], alpha=[bold]{result.best_alpha:g}[/bold], "
        f"{len(estimate.edges)} edges; BIC table in {out / 'bic_table.csv'}"
    )


@app.command()
@handle_errors
def ingest(
    paths: List[Path] = typer.Argument(..., help="One price CSV per entity"),
    features: str = typer.Option("close", "--features", "-f", help="Comma-separated feature columns"),
    date_column: str = typer.Option("date", "--date-column"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o"),
):
    """Turn price files into a standardized log-return table."""
    table = ingest_csv(paths, [name.strip() for name in features.split(",") if name.strip()], date_column)
    path = table.write_csv(_output_dir(output_dir) / "returns.csv")
    console.print(
        f"{table.values.shape[0]} rows x {table.values.shape[1]} columns "
        f"({table.dropped_rows} dropped) written to [bold]{path}[/bold]"
    )


@app.command()
@handle_errors
def real(
    paths: List[Path] = typer.Argument(..., help="One price CSV per entity"),
    features: str = typer.Option("close", "--features", "-f"),
    penalty: Optional[List[str]] = typer.Option(None, "--penalty", help="Penalty (repeatable)"),
    lam: Optional[float] = typer.Option(None, "--lambda", help="Fixed lambda instead of BIC"),
    theta: Optional[float] = typer.Option(None, "--theta"),
    jobs: Optional[int] = typer.Option(None, "--jobs", "-j"),
    config_path: Optional[Path] = typer.Option(None, "--config", "-c"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o"),
):
    """Ingest price files and fit one BIC-selected graph per penalty."""
    settings = _settings(
        config_path, penalties=penalty or None, theta=theta, jobs=jobs, output_dir=output_dir, **{"lambda": lam}
    )
    table = ingest_csv(paths, [name.strip() for name in features.split(",") if name.strip()])
    result = run_real(table, settings.penalties, settings)
    for outcome in result.outcomes:
        console.print(
            f"[bold]{outcome.penalty}[/bold]: {outcome.n_edges} edges "
            f"(lambda={outcome.best_lambda:.4g}, alpha={outcome.best_alpha:g})"
        )


@app.command()
@handle_errors
def fixture(
    output_dir: Path = typer.Option(..., "--output-dir", "-o"),
    p: int = typer.Option(10, "--p"),
    m: int = typer.Option(1, "--m"),
    n: int = typer.Option(500, "--n", help="Number of returns"),
    graph: str = typer.Option("er", "--graph", help="er or ba"),
    p_er: float = typer.Option(0.2, "--p-er"),
    seed: int = typer.Option(0, "--seed"),
):
    """Write synthetic price files with a planted graph."""
    kind = GraphKind.er(p_er) if graph == "er" else GraphKind.ba(2.0)
    truth = generate_truth(kind, p, m, seed)
    make_fixture_prices(truth, n, seed, output_dir)
    truth.write_json(output_dir / "truth.json")
    write_matrix(truth.omega_star, output_dir / "omega_star.csv")
    console.print(f"{p} price files, {len(truth.edges_star)} planted edges in [bold]{output_dir}[/bold]")


@app.command()
@handle_errors
def diagnose(
    mode: DiagnoseMode = typer.Argument(..., help="kkt, convexity, tail or irrep"),
    omega_path: Optional[Path] = typer.Option(None, "--omega", help="Precision matrix file"),
    sigma_path: Optional[Path] = typer.Option(None, "--sigma", help="Covariance matrix file"),
    penalty: str = typer.Option("lasso", "--penalty"),
    lam: float = typer.Option(0.1, "--lambda"),
    alpha: float = typer.Option(0.05, "--alpha"),
    m: Optional[int] = typer.Option(None, "--m"),
    p: int = typer.Option(4, "--p", help="Nodes of a generated truth"),
    graph: str = typer.Option("er", "--graph"),
    p_er: float = typer.Option(0.3, "--p-er"),
    n: int = typer.Option(1000, "--n"),
    tau: float = typer.Option(3.0, "--tau"),
    trials: int = typer.Option(100, "--trials"),
    seed: int = typer.Option(0, "--seed"),
    jobs: int = typer.Option(1, "--jobs", "-j"),
    output_dir: Optional[Path] = typer.Option(None, "--output-dir", "-o"),
):
    """Run a verification check and write its JSON report."""
    out = _output_dir(output_dir)
    spec = PenaltySpec(kind=PenaltyKind.parse(penalty), lam=lam, alpha=alpha)

    def generated_truth():
        kind = GraphKind.er(p_er) if graph == "er" else GraphKind.ba(2.0)
        return generate_truth(kind, p, m or 2, seed)

    if mode is DiagnoseMode.KKT:
        if omega_path is None or sigma_path is None:
            raise InvalidInputError("kkt needs --omega and --sigma")
        payload = kkt_residual(read_matrix(omega_path), read_matrix(sigma_path), spec).model_dump()
    elif mode is DiagnoseMode.CONVEXITY:
        block_size = m or (read_matrix(omega_path).m if omega_path else 1)
        threshold = convexity_threshold(spec, block_size)
        payload = {"penalty": spec.kind.value, "m": block_size, "mu_bar": None if math.isinf(threshold) else threshold}
        if omega_path is not None:
            omega = read_matrix(omega_path)
            payload["in_region"] = in_convexity_region(omega, spec)
            if omega.dim <= get_config().hessian_max_dim:
                payload["hessian_convex"] = hessian_convexity_check(omega, amenability_mu(spec) * omega.m)
    elif mode is DiagnoseMode.TAIL:
        if sigma_path is not None:
            sigma = read_matrix(sigma_path)
        else:
            truth = generated_truth()
            sigma = truth.omega_star.with_data(truth.sigma_star)
        report = tail_bound_check(sigma, n, tau, trials, seed=seed, jobs=jobs)
        report.write_trials_csv(out / "tail_trials.csv")
        payload = report.model_dump(exclude={"block_deviations", "element_deviations"})
    else:
        if omega_path is not None:
            omega = read_matrix(omega_path)
            edges = extract_edges(omega)
        else:
            truth = generated_truth()
            omega, edges = truth.omega_star, truth.edges_star
        payload = irrepresentability(omega, edges).model_dump()

    path = write_json(payload, out / f"diagnose_{mode.value}.json")
    console.print_json(json.dumps(payload, default=str))
    console.print(f"Report written to [bold]{path}[/bold]")


@app.command()
def version():
    """Show the magm version."""
    from magm import __version__
    console.print(f"magm version: [bold]{__version__}[/bold]")


def main():
    """Run the magm CLI."""
    setup_logging()
    app()
