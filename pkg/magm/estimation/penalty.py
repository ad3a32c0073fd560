"""
Penalty functions for sparse-group precision matrix estimation.

Three penalties rho_lambda(u) are supported, all functions of |u|:

* lasso:   lambda*|u|
* log-sum: lambda*eps*ln(1 + |u|/eps)
* SCAD:    lambda*|u| for |u| <= lambda,
           (2*a*lambda*|u| - u^2 - lambda^2) / (2*(a-1)) for lambda < |u| < a*lambda,
           lambda^2*(a+1)/2 beyond.

The non-convex ones are handled by local linear approximation (LLA): at a
reference estimate they are replaced by their tangent in |u|, which turns the
problem into a weighted sparse-group lasso.
"""

import logging
import math
from enum import Enum
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from magm.core.errors import InvalidInputError
from magm.linalg.block_matrix import BlockMatrix, block_norm_map

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[float, np.ndarray]


class PenaltyKind(str, Enum):
    """Supported penalty families."""

    LASSO = "lasso"
    LOG_SUM = "log-sum"
    SCAD = "scad"

    @classmethod
    def parse(cls, value: str) -> "PenaltyKind":
        """Accept the usual spellings: lasso, logsum, log-sum, log_sum, scad."""
        key = value.strip().lower().replace("_", "-")
        if key == "logsum":
            key = "log-sum"
        try:
            return cls(key)
        except ValueError as e:
            raise InvalidInputError("unknown penalty", penalty=value) from e


class PenaltySpec(BaseModel):
    """Penalty kind and its parameters."""

    kind: PenaltyKind = Field(PenaltyKind.LASSO, description="Penalty family.")
    lam: float = Field(..., gt=0.0, alias="lambda", description="Regularization level lambda.")
    alpha: float = Field(0.05, ge=0.0, le=1.0, description="Element-wise vs group-wise balance.")
    epsilon: float = Field(1e-4, gt=0.0, description="Log-sum smoothing constant.")
    a: float = Field(3.7, gt=2.0, description="SCAD shape parameter.")

    class Config:
        populate_by_name = True
        frozen = True

    @model_validator(mode="before")
    @classmethod
    def _parse_kind(cls, values):
        if isinstance(values, dict) and isinstance(values.get("kind"), str):
            values = {**values, "kind": PenaltyKind.parse(values["kind"])}
        return values

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return self.model_copy(update={"lam": float(lam)})

    def with_alpha(self, alpha: float) -> "PenaltySpec":
        return self.model_copy(update={"alpha": float(alpha)})

    @property
    def is_convex(self) -> bool:
        return self.kind is PenaltyKind.LASSO


class LlaWeights(BaseModel):
    """Element and group weights of the weighted sparse-group lasso surrogate."""

    element: np.ndarray = Field(..., description="(mp)x(mp) element-wise weights lambda_e,ij.")
    group: np.ndarray = Field(..., description="p x p group weights lambda_g,kl.")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @classmethod
    def constant(cls, lam: float, p: int, m: int) -> "LlaWeights":
        return cls(element=np.full((p * m, p * m), float(lam)), group=np.full((p, p), float(lam)))


def penalty_value(spec: PenaltySpec, u: ArrayOrFloat) -> ArrayOrFloat:
    """
    Evaluate rho_lambda(|u|).

    Args:
        spec: Penalty specification.
        u: Scalar or array argument.

    Returns:
        Nonnegative value(s) with the shape of ``u``.
    """
    x = np.abs(np.asarray(u, dtype=float))
    lam = spec.lam
    if spec.kind is PenaltyKind.LASSO:
        out = lam * x
    elif spec.kind is PenaltyKind.LOG_SUM:
        out = lam * spec.epsilon * np.log1p(x / spec.epsilon)
    else:
        a = spec.a
        middle = (2.0 * a * lam * x - x ** 2 - lam ** 2) / (2.0 * (a - 1.0))
        out = np.where(x <= lam, lam * x, np.where(x < a * lam, middle, lam ** 2 * (a + 1.0) / 2.0))
    return float(out) if np.ndim(out) == 0 else out


def penalty_gradient(spec: PenaltySpec, u0: ArrayOrFloat) -> ArrayOrFloat:
    """
    Derivative of rho_lambda with respect to |u|, evaluated at |u0|.

    The SCAD branch points use closed left intervals: lambda at |u0| = lambda,
    (a*lambda - |u0|)/(a - 1) at |u0| = a*lambda.
    """
    x = np.abs(np.asarray(u0, dtype=float))
    lam = spec.lam
    if spec.kind is PenaltyKind.LASSO:
        out = np.full_like(x, lam)
    elif spec.kind is PenaltyKind.LOG_SUM:
        out = lam * spec.epsilon / (x + spec.epsilon)
    else:
        a = spec.a
        out = np.where(x <= lam, lam, np.where(x <= a * lam, (a * lam - x) / (a - 1.0), 0.0))
    return float(out) if np.ndim(out) == 0 else out


def lla_weights(spec: PenaltySpec, omega_bar: BlockMatrix) -> LlaWeights:
    """
    Tangent weights of the penalty at a reference estimate.

    Element weights come from |omega_bar_ij|, group weights from the block
    Frobenius norms. Lasso weights are lambda everywhere.
    """
    if spec.kind is PenaltyKind.LASSO:
        return LlaWeights.constant(spec.lam, omega_bar.p, omega_bar.m)
    element = penalty_gradient(spec, omega_bar.data)
    group = penalty_gradient(spec, block_norm_map(omega_bar).values)
    element = 0.5 * (element + element.T)
    group = 0.5 * (group + group.T)
    return LlaWeights(element=element, group=group)


def amenability_mu(spec: PenaltySpec) -> float:
    """Smallest mu with rho_lambda(u) + (mu/2) u^2 convex."""
    if spec.kind is PenaltyKind.LASSO:
        return 0.0
    if spec.kind is PenaltyKind.SCAD:
        return 1.0 / (spec.a - 1.0)
    return spec.lam / spec.epsilon


def lower_bound_constants(spec: PenaltySpec) -> Tuple[float, float]:
    """(C_lambda, delta_lambda) with rho_lambda(u) >= C_lambda*|u| for |u| <= delta_lambda."""
    c_lam = spec.lam / 2.0
    if spec.kind is PenaltyKind.LASSO:
        return c_lam, math.inf
    if spec.kind is PenaltyKind.SCAD:
        return c_lam, spec.lam
    return c_lam, spec.epsilon


def negative_log_likelihood(sigma_hat: BlockMatrix, omega: BlockMatrix) -> float:
    """tr(Sigma_hat Omega) - ln|Omega|; +inf when Omega is not positive definite."""
    sign, logdet = np.linalg.slogdet(omega.data)
    if sign <= 0:
        return math.inf
    return float(np.sum(sigma_hat.data * omega.data) - logdet)


def _off_diagonal(values: np.ndarray) -> np.ndarray:
    return values[~np.eye(values.shape[0], dtype=bool)]


def penalized_objective(sigma_hat: BlockMatrix, omega: BlockMatrix, spec: PenaltySpec) -> float:
    """Sparse-group penalized negative log-likelihood with the exact penalty."""
    base = negative_log_likelihood(sigma_hat, omega)
    if not math.isfinite(base):
        return base
    element = np.sum(penalty_value(spec, _off_diagonal(omega.data)))
    group = np.sum(penalty_value(spec, _off_diagonal(block_norm_map(omega).values)))
    return float(base + spec.alpha * element + (1.0 - spec.alpha) * omega.m * group)


def weighted_objective(
    sigma_hat: BlockMatrix, omega: BlockMatrix, weights: LlaWeights, alpha: float
) -> float:
    """Fixed-weight (LLA surrogate) objective."""
    base = negative_log_likelihood(sigma_hat, omega)
    if not math.isfinite(base):
        return base
    element = np.sum(_off_diagonal(weights.element * np.abs(omega.data)))
    group = np.sum(_off_diagonal(weights.group * block_norm_map(omega).values))
    return float(base + alpha * element + (1.0 - alpha) * omega.m * group)
