"""
BIC model selection over (lambda, alpha).

The lambda range comes from the no-edge heuristic: find the smallest
lambda_sm that yields an empty graph, then search [lambda_u/10, lambda_u]
with lambda_u = lambda_sm/2.
"""

import logging
import math
import multiprocessing as mp
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from magm.core.errors import InvalidInputError, SearchFailureError
from magm.estimation.admm_solver import AdmmConfig
from magm.estimation.estimator import (
    DEFAULT_LLA_ROUNDS,
    NONZERO_FLOOR,
    GraphEstimate,
    fit,
    sample_covariance,
)
from magm.estimation.penalty import PenaltySpec
from magm.linalg.block_matrix import BlockMatrix, log_det

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
DEFAULT_GRID_SIZE = 15
DEFAULT_ALPHA_GRID = (0.01, 0.05, 0.1, 0.2, 0.3)
LAMBDA_SEARCH_MAX = 1e6
LAMBDA_SEARCH_FLOOR = 1e-6


class BicRecord(BaseModel):
    """One evaluated grid point."""

    lam: float = Field(..., gt=0.0, description="Regularization level.")
    alpha: float = Field(..., ge=0.0, le=1.0)
    bic: float
    n_enlarged: int = Field(..., ge=0, description="Ordered nonzero off-diagonal entries of omega_hat.")
    n_edges: int = Field(..., ge=0, description="Node-graph edges of the estimate.")
    converged: bool


class LambdaGrid(BaseModel):
    """No-edge heuristic output."""

    lambda_sm: float = Field(..., gt=0.0, description="Smallest lambda giving an empty graph.")
    lower: float = Field(..., gt=0.0)
    upper: float = Field(..., gt=0.0)
    values: List[float] = Field(..., description="Log-spaced grid from lower to upper inclusive.")


class SelectionResult(BaseModel):
    """Outcome of BIC selection."""

    best_lambda: float = Field(..., gt=0.0)
    best_alpha: float = Field(..., ge=0.0, le=1.0)
    bic_table: List[BicRecord] = Field(default_factory=list)
    lambda_bounds: Tuple[float, float]
    lambda_sm: float
    best_estimate: Optional[GraphEstimate] = None

    def table_frame(self) -> pd.DataFrame:
        rows = [
            {
                "lambda": r.lam,
                "alpha": r.alpha,
                "bic": r.bic,
                "n_edges": r.n_edges,
                "converged": r.converged,
                "n_enlarged": r.n_enlarged,
            }
            for r in self.bic_table
        ]
        return pd.DataFrame(rows, columns=["lambda", "alpha", "bic", "n_edges", "converged", "n_enlarged"])

    def write_table_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table_frame().to_csv(path, index=False)
        return path


def count_enlarged_edges(omega_hat: BlockMatrix, floor: float = NONZERO_FLOOR) -> int:
    """Ordered nonzero off-diagonal entries (|value| > floor)."""
    mask = np.abs(omega_hat.data) > floor
    np.fill_diagonal(mask, False)
    return int(np.count_nonzero(mask))


def bic(sigma_hat: BlockMatrix, omega_hat: BlockMatrix, n: int, floor: float = NONZERO_FLOOR) -> float:
    """
    tr(S Omega) - ln|Omega| + (ln n / n) * |E|/2, with |E| the ordered count
    of nonzero off-diagonal entries.

    Raises:
        InvalidInputError: If omega_hat is not positive definite or n < 1.
    """
    if n < 1:
        raise InvalidInputError("BIC needs a positive sample size", n=n)
    fit_term = float(np.sum(sigma_hat.data * omega_hat.data)) - log_det(omega_hat)
    return fit_term + (math.log(n) / n) * (count_enlarged_edges(omega_hat, floor) / 2.0)


def _has_edges(
    sigma_hat: BlockMatrix, spec: PenaltySpec, lam: float, config: AdmmConfig, lla_rounds: int
) -> bool:
    return bool(fit(sigma_hat, spec.with_lambda(lam), config, lla_rounds=lla_rounds).edges)


def find_lambda_sm(
    sigma_hat: BlockMatrix,
    spec_template: PenaltySpec,
    config: AdmmConfig,
    lambda_init: float = 1.0,
    rel_tol: float = 0.01,
    lla_rounds: int = DEFAULT_LLA_ROUNDS,
) -> float:
    """
    Smallest lambda with an empty edge set, to ``rel_tol`` relative accuracy.

    Doubles from ``lambda_init`` until the graph is empty, halves until it is
    not, then bisects. An already-empty graph at the search floor returns the
    floor.

    Raises:
        SearchFailureError: If no lambda up to 1e6 empties the graph.
    """
    lam = lambda_init
    if _has_edges(sigma_hat, spec_template, lam, config, lla_rounds):
        low = lam
        while True:
            lam *= 2.0
            if lam > LAMBDA_SEARCH_MAX:
                raise SearchFailureError("no-edge model not reached", lambda_max=LAMBDA_SEARCH_MAX)
            if not _has_edges(sigma_hat, spec_template, lam, config, lla_rounds):
                high = lam
                break
            low = lam
    else:
        high = lam
        while True:
            lam /= 2.0
            if lam < LAMBDA_SEARCH_FLOOR:
                logger.info(f"Graph is empty down to the search floor {LAMBDA_SEARCH_FLOOR:g}")
                return LAMBDA_SEARCH_FLOOR
            if _has_edges(sigma_hat, spec_template, lam, config, lla_rounds):
                low = lam
                break
            high = lam

    while (high - low) / high > rel_tol:
        middle = 0.5 * (low + high)
        if _has_edges(sigma_hat, spec_template, middle, config, lla_rounds):
            low = middle
        else:
            high = middle
    return high


def lambda_grid(
    sigma_hat: BlockMatrix,
    spec_template: PenaltySpec,
    config: AdmmConfig,
    grid_size: int = DEFAULT_GRID_SIZE,
    lambda_init: float = 1.0,
    lla_rounds: int = DEFAULT_LLA_ROUNDS,
) -> LambdaGrid:
    """Search bounds lambda_u = lambda_sm/2, lambda_l = lambda_u/10 and a log grid between them."""
    if grid_size < 2:
        raise InvalidInputError("grid_size must be at least 2", grid_size=grid_size)
    lambda_sm = find_lambda_sm(sigma_hat, spec_template, config, lambda_init, lla_rounds=lla_rounds)
    return grid_from_lambda_sm(lambda_sm, grid_size)


def grid_from_lambda_sm(lambda_sm: float, grid_size: int = DEFAULT_GRID_SIZE) -> LambdaGrid:
    upper = lambda_sm / 2.0
    lower = upper / 10.0
    values = np.geomspace(lower, upper, grid_size)
    values[0], values[-1] = lower, upper
    return LambdaGrid(lambda_sm=lambda_sm, lower=lower, upper=upper, values=[float(v) for v in values])


def _evaluate_point(args) -> Tuple[BicRecord, GraphEstimate]:
    sigma_hat, spec, config, lla_rounds, n = args
    estimate = fit(sigma_hat, spec, config, lla_rounds=lla_rounds, n_samples=n)
    try:
        score = bic(sigma_hat, estimate.omega_hat, n)
    except InvalidInputError:
        logger.warning(f"Estimate at lambda={spec.lam:.4g}, alpha={spec.alpha:g} is not positive definite")
        score = math.inf
    record = BicRecord(
        lam=spec.lam,
        alpha=spec.alpha,
        bic=score,
        n_enlarged=count_enlarged_edges(estimate.omega_hat),
        n_edges=len(estimate.edges),
        converged=estimate.converged,
    )
    return record, estimate


def evaluate_grid(
    sigma_hat: BlockMatrix,
    specs: Sequence[PenaltySpec],
    config: AdmmConfig,
    n: int,
    lla_rounds: int = DEFAULT_LLA_ROUNDS,
    jobs: int = 1,
) -> List[Tuple[BicRecord, GraphEstimate]]:
    """Fit and score every spec; results come back sorted by (lambda, alpha)."""
    tasks = [(sigma_hat, spec, config, lla_rounds, n) for spec in specs]
    if jobs > 1 and len(tasks) > 1:
        with mp.Pool(min(jobs, len(tasks))) as pool:
            results = pool.map(_evaluate_point, tasks)
    else:
        results = [_evaluate_point(task) for task in tasks]
    return sorted(results, key=lambda item: (item[0].lam, item[0].alpha))


def _best(results: Sequence[Tuple[BicRecord, GraphEstimate]]) -> Tuple[BicRecord, GraphEstimate]:
    # Ties go to the sparser model: larger lambda, then larger alpha.
    return min(results, key=lambda item: (item[0].bic, -item[0].lam, -item[0].alpha))


def select(
    source: Union[BlockMatrix, np.ndarray],
    spec_template: PenaltySpec,
    config: Optional[AdmmConfig] = None,
    lambda_grid_size: int = DEFAULT_GRID_SIZE,
    alpha_grid: Optional[Sequence[float]] = None,
    m: Optional[int] = None,
    n: Optional[int] = None,
    lla_rounds: int = DEFAULT_LLA_ROUNDS,
    jobs: int = 1,
    grid: Optional[LambdaGrid] = None,
) -> SelectionResult:
    """
    Two-phase BIC selection.

    Phase 1 fixes alpha = 0.05 and scans the lambda grid. Phase 2 runs only
    when ``alpha_grid`` is given: it keeps the winning lambda and scans alpha.

    Args:
        source: Covariance BlockMatrix (then ``n`` is required) or n x (mp) data.
        spec_template: Penalty kind and its shape parameters; lambda is replaced.
        config: ADMM constants.
        lambda_grid_size: Number of log-spaced lambda values.
        alpha_grid: Alpha values for phase 2, or None for phase 1 only.
        m: Attributes per node when ``source`` is a data matrix.
        n: Sample size when ``source`` is a covariance.
        lla_rounds: Solves per fit for non-convex penalties.
        jobs: Worker processes for the grid.
        grid: Precomputed lambda grid, skipping the lambda_sm search.
    """
    config = config or AdmmConfig()
    if isinstance(source, BlockMatrix):
        if n is None:
            raise InvalidInputError("sample size n is required with a covariance input")
        sigma_hat = source.symmetrized()
    else:
        if m is None:
            raise InvalidInputError("m is required when selecting from a data matrix")
        data = np.asarray(source, dtype=float)
        sigma_hat = sample_covariance(data, m)
        n = data.shape[0]

    base = spec_template.with_alpha(DEFAULT_ALPHA)
    if grid is None:
        grid = lambda_grid(sigma_hat, base, config, lambda_grid_size, lla_rounds=lla_rounds)
    logger.info(
        f"BIC search for {base.kind.value}: lambda in [{grid.lower:.4g}, {grid.upper:.4g}] "
        f"({len(grid.values)} points, lambda_sm={grid.lambda_sm:.4g})"
    )

    results = evaluate_grid(
        sigma_hat, [base.with_lambda(lam) for lam in grid.values], config, n, lla_rounds, jobs
    )
    best_record, _ = _best(results)

    if alpha_grid:
        seen = {(r.lam, r.alpha) for r, _ in results}
        specs = [
            base.with_lambda(best_record.lam).with_alpha(alpha)
            for alpha in alpha_grid
            if (best_record.lam, float(alpha)) not in seen
        ]
        if specs:
            results = sorted(
                results + evaluate_grid(sigma_hat, specs, config, n, lla_rounds, jobs),
                key=lambda item: (item[0].lam, item[0].alpha),
            )

    best_record, best_estimate = _best(results)
    logger.info(
        f"Selected lambda={best_record.lam:.4g}, alpha={best_record.alpha:g} "
        f"(BIC={best_record.bic:.4f}, {best_record.n_edges} edges)"
    )
    return SelectionResult(
        best_lambda=best_record.lam,
        best_alpha=best_record.alpha,
        bic_table=[record for record, _ in results],
        lambda_bounds=(grid.lower, grid.upper),
        lambda_sm=grid.lambda_sm,
        best_estimate=best_estimate,
    )
