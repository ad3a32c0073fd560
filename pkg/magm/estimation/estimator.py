"""
Outer estimation procedure: initialization, LLA re-weighting rounds around
the ADMM solver, and edge-set extraction.
"""

import logging
from typing import Any, Dict, FrozenSet, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from magm.core.errors import InvalidInputError
from magm.estimation.admm_solver import AdmmConfig, SolverResult, solve
from magm.estimation.penalty import PenaltyKind, PenaltySpec, lla_weights
from magm.linalg.block_matrix import BlockMatrix, BlockNormMap, block_norm_map

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
EdgeSet = FrozenSet[Edge]

DEFAULT_LLA_ROUNDS = 2
LLA_FIXED_POINT_TOL = 1e-4
NONZERO_FLOOR = 1e-10


class GraphEstimate(BaseModel):
    """Estimated precision matrix, its edge set and solver telemetry."""

    omega_hat: BlockMatrix = Field(..., description="Estimated precision matrix.")
    edges: EdgeSet = Field(..., description="Estimated edges (q, l), q < l, 0-based.")
    block_weights: BlockNormMap = Field(..., description="Block Frobenius norms of omega_hat.")
    theta: float = Field(0.0, ge=0.0, description="Edge threshold on block norms.")
    lla_rounds: int = Field(..., ge=1, description="Number of ADMM solves performed.")
    solver_results: List[SolverResult] = Field(default_factory=list)
    penalty: PenaltySpec = Field(..., description="Penalty used for the fit.")
    n_samples: Optional[int] = Field(None, ge=1, description="Sample size behind the covariance, if known.")

    class Config:
        arbitrary_types_allowed = True

    @property
    def converged(self) -> bool:
        return all(result.converged for result in self.solver_results)

    def enlarged_edges(self, floor: float = NONZERO_FLOOR) -> List[Edge]:
        """Ordered off-diagonal (i, j) entries of omega_hat with |value| > floor."""
        mask = np.abs(self.omega_hat.data) > floor
        np.fill_diagonal(mask, False)
        rows, cols = np.nonzero(mask)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def to_json_dict(self, labels: Optional[List[str]] = None) -> Dict[str, Any]:
        """JSON-ready summary: edges, block weights and solver telemetry."""
        return {
            "p": self.omega_hat.p,
            "m": self.omega_hat.m,
            "penalty": self.penalty.kind.value,
            "lambda": self.penalty.lam,
            "alpha": self.penalty.alpha,
            "theta": self.theta,
            "n_samples": self.n_samples,
            "labels": labels,
            "edges": [list(edge) for edge in sorted(self.edges)],
            "block_weights": self.block_weights.values.tolist(),
            "lla_rounds": self.lla_rounds,
            "solver": [
                {
                    "iterations": result.iterations,
                    "converged": result.converged,
                    "primal_residual": result.primal_residual,
                    "dual_residual": result.dual_residual,
                    "rho": result.rho,
                }
                for result in self.solver_results
            ],
        }


def sample_covariance(data: np.ndarray, m: int) -> BlockMatrix:
    """
    (1/n) sum_t x(t) x(t)^T without mean removal.

    Args:
        data: n x (mp) matrix, rows are (pre-centered) samples.
        m: Attributes per node; the column count must be a multiple of m.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("need at least one sample row", shape=x.shape)
    if m <= 0 or x.shape[1] == 0 or x.shape[1] % m != 0:
        raise InvalidInputError("column count is not a multiple of m", columns=x.shape[1], m=m)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("data contain non-finite values")
    n = x.shape[0]
    return BlockMatrix(data=x.T @ x / n, p=x.shape[1] // m, m=m)


def extract_edges(omega_hat: BlockMatrix, theta: float = 0.0) -> EdgeSet:
    """Node pairs (q, l), q < l, whose block Frobenius norm exceeds theta."""
    return block_norm_map(omega_hat).support(theta)


def oracle_threshold(omega_star: BlockMatrix, edges_star: EdgeSet) -> float:
    """Half the smallest true edge-block norm; 0 for an empty graph."""
    if not edges_star:
        return 0.0
    values = block_norm_map(omega_star).values
    return 0.5 * float(min(values[q, l] for q, l in edges_star))


def initial_guess(sigma_hat: BlockMatrix) -> BlockMatrix:
    """(diag(Sigma_hat))^-1."""
    diagonal = np.diag(sigma_hat.data)
    if np.any(diagonal <= 0.0):
        raise InvalidInputError(
            "covariance has a non-positive diagonal entry", index=int(np.argmin(diagonal))
        )
    return sigma_hat.with_data(np.diag(1.0 / diagonal), symmetric=True)


def fit(
    source: Union[BlockMatrix, np.ndarray],
    spec: PenaltySpec,
    config: Optional[AdmmConfig] = None,
    lla_rounds: int = DEFAULT_LLA_ROUNDS,
    m: Optional[int] = None,
    theta: float = 0.0,
    n_samples: Optional[int] = None,
    record_trace: bool = False,
) -> GraphEstimate:
    """
    Estimate the precision matrix and edge set.

    Lasso runs a single ADMM solve. Log-sum and SCAD first solve with weights
    taken at the diagonal initial guess (all off-diagonal weights equal
    lambda), then re-weight at each estimate and re-solve, warm-started,
    until ``lla_rounds`` solves are done or the estimate stops moving.

    Args:
        source: Covariance BlockMatrix or an n x (mp) data matrix.
        spec: Penalty specification.
        config: ADMM constants, defaults to AdmmConfig().
        lla_rounds: Maximum number of solves for non-convex penalties.
        m: Attributes per node, required when ``source`` is a data matrix.
        theta: Edge threshold on block norms.
        n_samples: Sample size when ``source`` is a covariance.
        record_trace: Keep per-iteration solver traces.

    Returns:
        GraphEstimate for the final round.
    """
    if lla_rounds < 1:
        raise InvalidInputError("lla_rounds must be at least 1", lla_rounds=lla_rounds)
    config = config or AdmmConfig()

    if isinstance(source, BlockMatrix):
        sigma_hat = source.symmetrized()
    else:
        if m is None:
            raise InvalidInputError("m is required when fitting from a data matrix")
        data = np.asarray(source, dtype=float)
        sigma_hat = sample_covariance(data, m)
        n_samples = data.shape[0]

    omega_bar = initial_guess(sigma_hat)
    weights = lla_weights(spec, omega_bar)
    results: List[SolverResult] = [
        solve(sigma_hat, weights, spec.alpha, config, omega_bar, record_trace=record_trace)
    ]
    omega_hat = results[-1].omega_hat

    if spec.kind is not PenaltyKind.LASSO:
        for _ in range(1, lla_rounds):
            previous = omega_hat
            weights = lla_weights(spec, previous)
            results.append(
                solve(sigma_hat, weights, spec.alpha, config, previous, record_trace=record_trace)
            )
            omega_hat = results[-1].omega_hat
            change = np.linalg.norm(omega_hat.data - previous.data) / max(
                np.linalg.norm(previous.data), np.finfo(float).tiny
            )
            if change <= LLA_FIXED_POINT_TOL:
                logger.debug(f"LLA reached a fixed point after {len(results)} rounds (change={change:.2e})")
                break

    edges = extract_edges(omega_hat, theta)
    logger.debug(
        f"Fit {spec.kind.value} lambda={spec.lam:.4g} alpha={spec.alpha:g}: "
        f"{len(edges)} edges after {len(results)} solve(s)"
    )
    return GraphEstimate(
        omega_hat=omega_hat,
        edges=edges,
        block_weights=block_norm_map(omega_hat),
        theta=theta,
        lla_rounds=len(results),
        solver_results=results,
        penalty=spec,
        n_samples=n_samples,
    )
