"""
Verification checks for small instances.

* KKT: stationarity of the sparse-group penalized likelihood at an estimate,
  with feasibility of the subgradients on zero entries and zero blocks.
* Convexity: the region where a non-convex penalized objective stays convex,
  and a brute-force check through the Hessian Omega^-1 (x) Omega^-1.
* Tail bound: Monte-Carlo frequency of large block deviations of the sample
  covariance.
* Irrepresentability: how strongly non-edge coordinates of
  Gamma* = Sigma* [x] Sigma* load onto the true support.

Everything here builds dense Kronecker-type matrices and is capped to small
dimensions.
"""

import logging
import math
import multiprocessing as mp
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import linalg

from magm.config.settings import get_config
from magm.core.errors import InvalidInputError, NumericError, ResourceLimitError
from magm.estimation.admm_solver import soft_threshold
from magm.estimation.estimator import NONZERO_FLOOR, EdgeSet
from magm.estimation.penalty import LlaWeights, PenaltyKind, PenaltySpec, amenability_mu, lla_weights
from magm.linalg.block_matrix import (
    BlockMatrix,
    block_norm_map,
    norm_one_inf,
    norms,
    pair_indices,
    spd_inverse,
    sym_eig,
    tracy_singh,
)

logger = logging.getLogger(__name__)

CONVEXITY_MARGIN = 0.99
HESSIAN_TOL = 1e-10


class KktReport(BaseModel):
    """Stationarity residual and subgradient feasibility at an estimate."""

    residual_inf: float = Field(..., ge=0.0, description="Largest violation over determined coordinates.")
    max_violation_location: Optional[Tuple[int, int]] = Field(
        None, description="Entry (i, j) where residual_inf is attained."
    )
    subgradient_feasible: bool = Field(..., description="Zero entries and blocks admit valid subgradients.")
    feasibility_gap: float = Field(0.0, ge=0.0, description="Largest excess over a subgradient bound.")
    zero_blocks: int = Field(0, ge=0, description="Off-diagonal zero blocks checked for feasibility.")


class TailBoundReport(BaseModel):
    """Monte-Carlo check of the sample covariance deviation bound."""

    empirical_rate: float = Field(..., ge=0.0, le=1.0, description="Block deviation exceedance frequency.")
    elementwise_rate: float = Field(..., ge=0.0, le=1.0, description="Entry deviation exceedance frequency.")
    bound: float = Field(..., description="Target probability 1/p^(tau-2).")
    passes: bool
    c0_tilde: float = Field(..., description="Block constant.")
    c0: float = Field(..., description="Elementwise constant, c0_tilde / m.")
    block_threshold: float
    element_threshold: float
    trials: int = Field(..., ge=1)
    block_deviations: List[float] = Field(default_factory=list)
    element_deviations: List[float] = Field(default_factory=list)

    def trials_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "trial": np.arange(self.trials),
                "block_deviation": self.block_deviations,
                "element_deviation": self.element_deviations,
            }
        )

    def write_trials_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.trials_frame().to_csv(path, index=False)
        return path


class IrrepReport(BaseModel):
    """Irrepresentability left-hand sides and the related conditioning constants."""

    lhs_group: float = Field(..., ge=0.0, description="max over f outside S of ||C(Gamma_fS Gamma_SS^-1)||_1.")
    lhs_element: float = Field(..., ge=0.0, description="Largest row l1 norm of Gamma_fS Gamma_SS^-1.")
    gamma_implied: float = Field(..., description="1 - max(lhs_group, lhs_element).")
    kappa_gamma: float = Field(..., ge=0.0, description="||C(Gamma_SS^-1)||_{1,inf}.")
    kappa_gamma_bar: float = Field(..., ge=0.0, description="||Gamma_SS^-1||_{1,inf}.")
    kappa_sigma: float = Field(..., ge=0.0, description="||C(Sigma*)||_{1,inf}.")
    kappa_sigma_bar: float = Field(..., ge=0.0, description="||Sigma*||_{1,inf}.")
    max_degree: int = Field(..., ge=0, description="Largest number of nonzero blocks per block row of Omega*.")
    max_degree_enlarged: int = Field(..., ge=0, description="Largest number of nonzeros per row of Omega*.")

    @property
    def holds(self) -> bool:
        return self.gamma_implied > 0.0


def kkt_residual(
    omega_hat: BlockMatrix,
    sigma_hat: BlockMatrix,
    spec: PenaltySpec,
    weights: Optional[LlaWeights] = None,
    feasibility_tol: float = 1e-3,
    zero_floor: float = NONZERO_FLOOR,
) -> KktReport:
    """
    First-order optimality check of the sparse-group objective at omega_hat.

    With G = Sigma_hat - omega_hat^-1, the condition is
    G + alpha * w o Z + (1 - alpha) * m * g o Y = 0 off the diagonal and
    G_ii = 0 on it. On nonzero entries and blocks Z and Y are determined and
    the residual is measured; on zero entries and zero blocks the smallest
    admissible subgradient is solved for and only its feasibility is checked.

    Weights are the penalty derivatives at |omega_hat| (lambda at zeros, so
    the lasso gets lambda everywhere) unless fixed LLA ``weights`` are given.

    Raises:
        InvalidInputError: If omega_hat is singular or not positive definite.
    """
    if (omega_hat.p, omega_hat.m) != (sigma_hat.p, sigma_hat.m):
        raise InvalidInputError("estimate and covariance differ in structure")
    p, m, alpha = omega_hat.p, omega_hat.m, spec.alpha
    omega = omega_hat.data
    g = sigma_hat.data - spd_inverse(omega)
    if weights is None:
        weights = lla_weights(spec, omega_hat)

    element_scale = alpha * weights.element
    block_norms = block_norm_map(omega_hat).values
    block_scale = (1.0 - alpha) * m * weights.group
    diagonal_blocks = np.eye(p, dtype=bool)
    nonzero_block = (block_norms > zero_floor) & ~diagonal_blocks
    zero_block = ~(block_norms > zero_floor) & ~diagonal_blocks

    # Group gradient on nonzero off-diagonal blocks: g_kl * Omega^(kl) / ||Omega^(kl)||_F.
    safe_norms = np.where(nonzero_block, block_norms, 1.0)
    group_scale = np.where(nonzero_block, block_scale / safe_norms, 0.0)
    group_term = (omega.reshape(p, m, p, m) * group_scale[:, None, :, None]).reshape(p * m, p * m)

    nonzero = np.abs(omega) > zero_floor
    off_diagonal = ~np.eye(p * m, dtype=bool)
    residual = np.zeros_like(omega)
    residual[~off_diagonal] = np.abs(np.diag(g))
    determined = nonzero & off_diagonal
    residual[determined] = np.abs(g + element_scale * np.sign(omega) + group_term)[determined]

    # Zero entries inside nonzero or diagonal blocks need |G_ij| <= alpha * w_ij.
    element_region = np.kron(nonzero_block | diagonal_blocks, np.ones((m, m))).astype(bool)
    zero_in_block = ~nonzero & off_diagonal & element_region
    gap = 0.0
    if np.any(zero_in_block):
        gap = float(np.max(np.abs(g)[zero_in_block] - element_scale[zero_in_block]))

    # Zero off-diagonal blocks need ||S(G, alpha * w)||_F <= (1 - alpha) * m * g_kl.
    remainder = soft_threshold(g, element_scale).reshape(p, m, p, m)
    remainder_norms = np.linalg.norm(remainder, axis=(1, 3))
    if np.any(zero_block):
        gap = max(gap, float(np.max((remainder_norms - block_scale)[zero_block])))

    flat = int(np.argmax(residual))
    location = (flat // (p * m), flat % (p * m))
    report = KktReport(
        residual_inf=float(residual.flat[flat]),
        max_violation_location=location,
        subgradient_feasible=bool(gap <= feasibility_tol),
        feasibility_gap=max(gap, 0.0),
        zero_blocks=int(np.count_nonzero(zero_block)) // 2,
    )
    logger.debug(
        f"KKT ({spec.kind.value}): residual={report.residual_inf:.3e} at {location}, "
        f"feasibility gap={report.feasibility_gap:.3e}"
    )
    return report


def convexity_threshold(spec: PenaltySpec, m: int) -> float:
    """
    Operator-norm radius mu_bar inside which the penalized objective is convex.

    Infinite for the lasso, sqrt((a - 1)/m) for SCAD and sqrt(eps/(m*lambda))
    for log-sum.
    """
    if m < 1:
        raise InvalidInputError("m must be positive", m=m)
    if spec.kind is PenaltyKind.LASSO:
        return math.inf
    if spec.kind is PenaltyKind.SCAD:
        return math.sqrt((spec.a - 1.0) / m)
    return math.sqrt(spec.epsilon / (m * spec.lam))


def in_convexity_region(omega: BlockMatrix, spec: PenaltySpec, m: Optional[int] = None) -> bool:
    """||Omega||_2 <= 0.99 * mu_bar."""
    threshold = convexity_threshold(spec, m or omega.m)
    if math.isinf(threshold):
        return True
    return norms(omega).operator <= CONVEXITY_MARGIN * threshold


def hessian_convexity_check(omega: BlockMatrix, mu: float, max_dim: Optional[int] = None) -> bool:
    """
    phi_min(Omega^-1 (x) Omega^-1) - mu >= -1e-10, computed from the dense Hessian.

    The smallest Hessian eigenvalue is cross-checked against 1/||Omega||^2.

    Raises:
        ResourceLimitError: If mp exceeds the Hessian cap.
        NumericError: If the two eigenvalue computations disagree.
    """
    limit = get_config().hessian_max_dim if max_dim is None else max_dim
    if omega.dim > limit:
        raise ResourceLimitError("Hessian check is limited to small matrices", requested=omega.dim, limit=limit)
    inverse = spd_inverse(omega)
    hessian = np.kron(inverse, inverse)
    phi_min = float(sym_eig(hessian).eigenvalues[0])
    analytic = 1.0 / float(np.max(sym_eig(omega).eigenvalues)) ** 2
    if not math.isclose(phi_min, analytic, rel_tol=1e-8, abs_tol=1e-12):
        raise NumericError("Hessian eigenvalue disagrees with 1/||Omega||^2", computed=phi_min, expected=analytic)
    logger.debug(f"Hessian phi_min={phi_min:.6g}, mu={mu:.6g}")
    return phi_min - mu >= -HESSIAN_TOL


def penalty_hessian_check(omega: BlockMatrix, spec: PenaltySpec) -> bool:
    """Hessian check with the penalty's own amenability constant."""
    return hessian_convexity_check(omega, amenability_mu(spec) * omega.m)


def _deviation_trial(args) -> Tuple[float, float]:
    factor, n, m, sigma_star, seed = args
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, factor.shape[0])) @ factor.T
    diff = x.T @ x / n - sigma_star
    p = sigma_star.shape[0] // m
    block = float(np.max(np.linalg.norm(diff.reshape(p, m, p, m), axis=(1, 3))))
    return block, float(np.max(np.abs(diff)))


def tail_bound_check(
    sigma_star: BlockMatrix,
    n: int,
    tau: float,
    trials: int,
    seed: int = 0,
    jobs: int = 1,
) -> TailBoundReport:
    """
    Monte-Carlo frequency of ||C(Sigma_hat - Sigma*)||_inf > C0_tilde sqrt(ln p / n).

    C0_tilde = 40 m sigma_max sqrt(2 ln(4 m^2 p^tau) / ln p) with sigma_max the
    largest diagonal entry of Sigma*; the entrywise deviation is compared to
    C0 = C0_tilde / m. The check passes when the block frequency is at most
    1/p^(tau - 2). Trial seeds are spawned from ``seed``.

    Raises:
        InvalidInputError: If trials < 1, p < 2 or n <= 2 ln(4 m^2 p^tau).
    """
    p, m = sigma_star.p, sigma_star.m
    if trials < 1:
        raise InvalidInputError("need at least one trial", trials=trials)
    if p < 2:
        raise InvalidInputError("tail bound needs p >= 2", p=p)
    log_term = math.log(4.0 * m * m) + tau * math.log(p)
    if n <= 2.0 * log_term:
        raise InvalidInputError("sample size below 2 ln(4 m^2 p^tau)", n=n, required=2.0 * log_term)

    sigma = sigma_star.data
    sigma_max = float(np.max(np.diag(sigma)))
    c0_tilde = 40.0 * m * sigma_max * math.sqrt(2.0 * log_term / math.log(p))
    c0 = c0_tilde / m
    rate = math.sqrt(math.log(p) / n)
    block_threshold, element_threshold = c0_tilde * rate, c0 * rate

    decomposition = sym_eig(sigma)
    if decomposition.eigenvalues[0] < 0.0:
        raise InvalidInputError("covariance is not positive semidefinite")
    factor = decomposition.eigenvectors * np.sqrt(decomposition.eigenvalues)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]
    tasks = [(factor, n, m, sigma, s) for s in seeds]
    if jobs > 1:
        with mp.Pool(min(jobs, trials)) as pool:
            results = pool.map(_deviation_trial, tasks)
    else:
        results = [_deviation_trial(task) for task in tasks]

    block = np.array([r[0] for r in results])
    element = np.array([r[1] for r in results])
    empirical = float(np.mean(block > block_threshold))
    bound = 1.0 / p ** (tau - 2.0)
    logger.info(f"Tail bound: {empirical:.4f} exceedance over {trials} trials, bound {bound:.4g}")
    return TailBoundReport(
        empirical_rate=empirical,
        elementwise_rate=float(np.mean(element > element_threshold)),
        bound=bound,
        passes=empirical <= bound,
        c0_tilde=c0_tilde,
        c0=c0,
        block_threshold=block_threshold,
        element_threshold=element_threshold,
        trials=trials,
        block_deviations=block.tolist(),
        element_deviations=element.tolist(),
    )


def support_pairs(edges: EdgeSet, p: int) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    """Ordered block pairs in S (edges both ways plus the diagonal) and in its complement."""
    support = set(edges) | {(l, q) for q, l in edges} | {(k, k) for k in range(p)}
    pairs = [(j, k) for j in range(p) for k in range(p)]
    return [pair for pair in pairs if pair in support], [pair for pair in pairs if pair not in support]


def irrepresentability(
    omega_star: BlockMatrix, edges_star: EdgeSet, max_dim: Optional[int] = None
) -> IrrepReport:
    """
    Irrepresentability quantities of a true precision matrix and its edge set.

    A GroundTruth can be passed as ``irrepresentability(t.omega_star, t.edges_star)``.

    Raises:
        ResourceLimitError: If mp exceeds the diagnostics cap.
        NumericError: If Gamma*_SS is singular.
    """
    limit = get_config().diagnostic_max_dim if max_dim is None else max_dim
    if omega_star.dim > limit:
        raise ResourceLimitError("irrepresentability check is limited to small matrices", requested=omega_star.dim, limit=limit)
    p, m = omega_star.p, omega_star.m
    width = m * m

    sigma_star = omega_star.with_data(spd_inverse(omega_star), symmetric=True)
    gamma = tracy_singh(sigma_star, sigma_star)
    in_s, out_s = support_pairs(edges_star, p)
    idx_s = pair_indices(in_s, p, m)
    idx_c = pair_indices(out_s, p, m)

    gamma_ss = gamma[np.ix_(idx_s, idx_s)]
    try:
        gamma_ss_inv = linalg.inv(gamma_ss)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericError("Gamma*_SS is singular", size=len(idx_s)) from e
    if not np.all(np.isfinite(gamma_ss_inv)):
        raise NumericError("Gamma*_SS is singular", size=len(idx_s))

    n_s = len(in_s)
    inverse_blocks = np.linalg.norm(gamma_ss_inv.reshape(n_s, width, n_s, width), axis=(1, 3))

    if out_s:
        loading = gamma[np.ix_(idx_c, idx_s)] @ gamma_ss_inv
        group_norms = np.linalg.norm(loading.reshape(len(out_s), width, n_s, width), axis=(1, 3))
        lhs_group = float(np.max(group_norms.sum(axis=1)))
        lhs_element = norm_one_inf(loading)
    else:
        lhs_group = lhs_element = 0.0

    c_omega = block_norm_map(omega_star).values
    report = IrrepReport(
        lhs_group=lhs_group,
        lhs_element=lhs_element,
        gamma_implied=1.0 - max(lhs_group, lhs_element),
        kappa_gamma=norm_one_inf(inverse_blocks),
        kappa_gamma_bar=norm_one_inf(gamma_ss_inv),
        kappa_sigma=norm_one_inf(block_norm_map(sigma_star).values),
        kappa_sigma_bar=norm_one_inf(sigma_star),
        max_degree=int(np.max(np.count_nonzero(c_omega > NONZERO_FLOOR, axis=1))),
        max_degree_enlarged=int(np.max(np.count_nonzero(np.abs(omega_star.data) > NONZERO_FLOOR, axis=1))),
    )
    logger.info(
        f"Irrepresentability: group={report.lhs_group:.4f}, element={report.lhs_element:.4f}, "
        f"gamma={report.gamma_implied:.4f}"
    )
    return report
