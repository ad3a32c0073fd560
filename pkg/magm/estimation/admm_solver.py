"""
Scaled ADMM for the weighted sparse-group graphical lasso.

Minimizes tr(S W) - ln|W| + alpha * sum_{i!=j} w_ij |W_ij|
    + (1 - alpha) * m * sum_{k!=l} g_kl ||W^(kl)||_F
by splitting W into Omega (log-likelihood part) and V (penalty part) with
scaled dual U, an adaptive penalty parameter rho and the usual
primal/dual residual stopping rule.
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from magm.config.settings import get_config
from magm.core.errors import InvalidInputError, NumericError
from magm.estimation.penalty import LlaWeights, weighted_objective
from magm.linalg.block_matrix import BlockMatrix, sym_eig

logger = logging.getLogger(__name__)


class AdmmConfig(BaseModel):
    """Control constants of the ADMM iteration."""

    rho_init: float = Field(2.0, gt=0.0, description="Initial penalty parameter rho-bar.")
    phi: float = Field(10.0, gt=1.0, description="Residual balance factor for rho adaptation.")
    tau_abs: float = Field(1e-4, gt=0.0, description="Absolute tolerance.")
    tau_rel: float = Field(1e-4, gt=0.0, description="Relative tolerance.")
    t_max: int = Field(200, gt=0, description="Maximum number of iterations.")

    class Config:
        frozen = True


class AdmmState(BaseModel):
    """Iterates of one ADMM step."""

    omega: BlockMatrix = Field(..., description="Log-likelihood iterate Omega.")
    v: BlockMatrix = Field(..., description="Penalty iterate V.")
    u: BlockMatrix = Field(..., description="Scaled dual variable U.")
    rho: float = Field(..., gt=0.0, description="Penalty parameter used for this step.")
    iteration: int = Field(0, ge=0, description="Iteration counter.")

    class Config:
        frozen = True


class ConvergenceReport(BaseModel):
    """Residuals and tolerances of one iteration."""

    converged: bool
    d_p: float = Field(..., ge=0.0, description="Primal residual ||Omega - V||_F.")
    d_d: float = Field(..., ge=0.0, description="Dual residual rho*||V_new - V_old||_F.")
    tau_pri: float
    tau_dual: float


class TraceRecord(BaseModel):
    """One row of the optional convergence trace."""

    iteration: int
    d_p: float
    d_d: float
    rho: float
    objective: float


class SolverResult(BaseModel):
    """Output of one ADMM solve."""

    omega_hat: BlockMatrix = Field(..., description="Estimate, the converged V iterate.")
    iterations: int = Field(..., ge=0)
    converged: bool
    primal_residual: float = Field(..., ge=0.0)
    dual_residual: float = Field(..., ge=0.0)
    rho: float = Field(..., gt=0.0, description="Penalty parameter at exit.")
    trace: List[TraceRecord] = Field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        columns = ["iteration", "d_p", "d_d", "rho", "objective"]
        return pd.DataFrame([record.model_dump() for record in self.trace], columns=columns)


def soft_threshold(a: np.ndarray, beta: Union[float, np.ndarray]) -> np.ndarray:
    """T_st(a, beta) = (1 - beta/|a|)_+ a, elementwise; exact +0.0 where |a| <= beta."""
    a = np.asarray(a, dtype=float)
    return np.where(np.abs(a) > beta, a - np.sign(a) * beta, 0.0)


def omega_update(sigma_hat: BlockMatrix, state: AdmmState) -> BlockMatrix:
    """
    Closed-form Omega-step.

    With S - rho(V - U) = P D P^T, each eigenvalue d maps to the positive
    root of rho*x^2 + d*x - 1 = 0, so the result is positive definite.
    """
    rho = state.rho
    shifted = sigma_hat.data - rho * (state.v.data - state.u.data)
    decomposition = sym_eig(shifted)
    d = decomposition.eigenvalues
    root = np.sqrt(d * d + 4.0 * rho)
    # Both branches equal (-d + root)/(2 rho); pick the cancellation-free one.
    d_tilde = np.where(d >= 0.0, 2.0 / (d + root), (root - d) / (2.0 * rho))
    omega = sigma_hat.with_data(decomposition.reconstruct(d_tilde), symmetric=True)
    if get_config().debug_checks:
        min_eig = float(np.min(sym_eig(omega).eigenvalues))
        assert min_eig > 0.0, f"Omega-update lost positive definiteness (min eigenvalue {min_eig})"
    return omega


def v_update(
    omega_next: BlockMatrix, state: AdmmState, weights: LlaWeights, alpha: float
) -> BlockMatrix:
    """
    Proximal step of the weighted sparse-group penalty.

    Diagonal blocks keep their diagonal and soft-threshold the off-diagonal
    entries; off-diagonal blocks are soft-thresholded elementwise and then
    group-shrunk, becoming exactly zero when the thresholded block norm does
    not exceed (1 - alpha) m lambda_g / rho.
    """
    p, m, rho = omega_next.p, omega_next.m, state.rho
    a = omega_next.data + state.u.data
    thresholded = soft_threshold(a, alpha * weights.element / rho)

    blocks = thresholded.reshape(p, m, p, m)
    block_norms = np.linalg.norm(blocks, axis=(1, 3))
    group_threshold = (1.0 - alpha) * m * weights.group / rho
    keep = block_norms > group_threshold
    safe_norms = np.where(keep, block_norms, 1.0)
    scale = np.where(keep, 1.0 - group_threshold / safe_norms, 0.0)

    diagonal = np.eye(p, dtype=bool)
    scale[diagonal] = 1.0
    keep[diagonal] = True

    v = np.where(keep[:, None, :, None], blocks * scale[:, None, :, None], 0.0).reshape(p * m, p * m)
    np.fill_diagonal(v, np.diag(a))
    return omega_next.with_data(v, symmetric=True)


def convergence_check(
    state_next: AdmmState, state_prev: AdmmState, config: AdmmConfig
) -> ConvergenceReport:
    """
    Primal/dual residuals against absolute-plus-relative tolerances.

    ``state_next.rho`` must be the penalty parameter used to produce the step.
    """
    dim = state_next.omega.dim
    rho = state_next.rho
    omega, v, u = state_next.omega.data, state_next.v.data, state_next.u.data
    tau_pri = dim * config.tau_abs + config.tau_rel * max(np.linalg.norm(omega), np.linalg.norm(v))
    tau_dual = dim * config.tau_abs + config.tau_rel * np.linalg.norm(u) / rho
    d_p = float(np.linalg.norm(omega - v))
    d_d = float(rho * np.linalg.norm(v - state_prev.v.data))
    return ConvergenceReport(
        converged=bool(d_p <= tau_pri and d_d <= tau_dual),
        d_p=d_p,
        d_d=d_d,
        tau_pri=float(tau_pri),
        tau_dual=float(tau_dual),
    )


def rho_update(d_p: float, d_d: float, state: AdmmState, phi: float) -> Tuple[float, BlockMatrix]:
    """
    Residual balancing: double rho (halve U) when the primal residual
    dominates, halve rho (double U) when the dual one does.
    """
    if d_p > phi * d_d:
        return state.rho * 2.0, state.u.with_data(state.u.data / 2.0)
    if d_d > phi * d_p:
        return state.rho / 2.0, state.u.with_data(state.u.data * 2.0)
    return state.rho, state.u


def solve(
    sigma_hat: BlockMatrix,
    weights: LlaWeights,
    alpha: float,
    config: AdmmConfig,
    omega_init: BlockMatrix,
    record_trace: bool = False,
) -> SolverResult:
    """
    Run ADMM to convergence or t_max iterations.

    Args:
        sigma_hat: Sample covariance.
        weights: Element and group penalty weights.
        alpha: Element-wise vs group-wise balance.
        config: Iteration constants.
        omega_init: Initial guess; seeds the V iterate.
        record_trace: Keep (iteration, d_p, d_d, rho, objective) per step.

    Returns:
        SolverResult with the V iterate as the estimate. Hitting t_max is
        reported through ``converged=False``, not an exception.

    Raises:
        NumericError: If an iterate becomes non-finite.
    """
    if (sigma_hat.p, sigma_hat.m) != (omega_init.p, omega_init.m):
        raise InvalidInputError("initial guess and covariance differ in structure")
    if weights.element.shape != sigma_hat.data.shape or weights.group.shape != (sigma_hat.p, sigma_hat.p):
        raise InvalidInputError("weight shapes do not match the covariance")

    zeros = BlockMatrix.zeros(sigma_hat.p, sigma_hat.m)
    state = AdmmState(omega=omega_init, v=omega_init, u=zeros, rho=config.rho_init, iteration=0)
    trace: List[TraceRecord] = []
    report: Optional[ConvergenceReport] = None

    for t in range(config.t_max):
        omega = omega_update(sigma_hat, state)
        v = v_update(omega, state, weights, alpha)
        u = state.u.with_data(state.u.data + omega.data - v.data)
        if not (omega.is_finite() and v.is_finite() and u.is_finite()):
            raise NumericError("non-finite ADMM iterate", iteration=t + 1)

        next_state = AdmmState(omega=omega, v=v, u=u, rho=state.rho, iteration=t + 1)
        report = convergence_check(next_state, state, config)
        if record_trace:
            trace.append(
                TraceRecord(
                    iteration=t + 1,
                    d_p=report.d_p,
                    d_d=report.d_d,
                    rho=state.rho,
                    objective=weighted_objective(sigma_hat, v, weights, alpha),
                )
            )
        if report.converged:
            state = next_state
            break

        rho, u = rho_update(report.d_p, report.d_d, next_state, config.phi)
        state = next_state.model_copy(update={"rho": rho, "u": u})

    assert report is not None
    if not report.converged:
        logger.warning(
            f"ADMM stopped at t_max={config.t_max} without converging "
            f"(d_p={report.d_p:.3e}, d_d={report.d_d:.3e})"
        )
    else:
        logger.debug(f"ADMM converged in {state.iteration} iterations (rho={state.rho:g})")

    return SolverResult(
        omega_hat=state.v,
        iterations=state.iteration,
        converged=report.converged,
        primal_residual=report.d_p,
        dual_residual=report.d_d,
        rho=state.rho,
        trace=trace,
    )


def write_trace_csv(result: SolverResult, path: Union[str, Path]) -> Path:
    """Write the convergence trace as CSV (iteration, d_p, d_d, rho, objective)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    result.trace_frame().to_csv(path, index=False)
    return path
