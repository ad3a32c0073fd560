"""
Dense block-structured matrix kernel.

An (mp)x(mp) matrix is viewed as a p x p grid of m x m blocks; block (k, l)
holds rows k*m..k*m+m-1 and columns l*m..l*m+m-1 (0-based). All operations
are pure: inputs are never mutated and returned arrays are fresh.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import linalg

from magm.config.settings import get_config
from magm.core.errors import (
    InvalidInputError,
    NumericError,
    ResourceLimitError,
    UnsupportedOperationError,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


def _check_block_shape(data, p, m) -> np.ndarray:
    """Return data as a float array, raising InvalidInputError unless it is (p*m)x(p*m)."""
    try:
        array = np.array(data, dtype=float)
    except (TypeError, ValueError) as e:
        raise InvalidInputError("matrix data is not numeric", reason=str(e)) from e
    if not isinstance(p, (int, np.integer)) or not isinstance(m, (int, np.integer)):
        # Missing or non-integer sizes are reported by field validation.
        return array
    if array.ndim != 2 or array.shape != (p * m, p * m):
        raise InvalidInputError(
            "matrix shape does not match block structure", shape=array.shape, p=int(p), m=int(m)
        )
    return array


class BlockMatrix(BaseModel):
    """Dense (mp)x(mp) matrix with (p, m) block structure."""

    data: np.ndarray = Field(..., description="Dense real matrix of dimension (m*p)x(m*p).")
    p: int = Field(..., gt=0, description="Number of graph nodes (blocks per axis).")
    m: int = Field(..., gt=0, description="Attributes per node (block size).")
    symmetric: bool = Field(True, description="Whether the matrix is symmetrized on construction.")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    def __init__(self, **values):
        # Shape errors surface as InvalidInputError ahead of field validation.
        _check_block_shape(values.get("data"), values.get("p"), values.get("m"))
        super().__init__(**values)

    @model_validator(mode="before")
    @classmethod
    def _coerce_data(cls, values):
        if not isinstance(values, dict):
            return values
        data = _check_block_shape(values.get("data"), values.get("p"), values.get("m"))
        if values.get("symmetric", True) and data.ndim == 2 and data.shape[0] == data.shape[1]:
            data = 0.5 * (data + data.T)
        data.flags.writeable = False
        return {**values, "data": data}

    @classmethod
    def from_array(cls, data, p: int, m: int, symmetric: bool = True) -> "BlockMatrix":
        """Wrap a dense array, inferring nothing: p and m must be given."""
        return cls(data=data, p=p, m=m, symmetric=symmetric)

    @classmethod
    def identity(cls, p: int, m: int) -> "BlockMatrix":
        return cls(data=np.eye(p * m), p=p, m=m)

    @classmethod
    def zeros(cls, p: int, m: int) -> "BlockMatrix":
        return cls(data=np.zeros((p * m, p * m)), p=p, m=m)

    @property
    def dim(self) -> int:
        """Side length m*p."""
        return self.p * self.m

    def block(self, k: int, l: int) -> np.ndarray:
        """Return a copy of the m x m block (k, l)."""
        m = self.m
        return self.data[k * m:(k + 1) * m, l * m:(l + 1) * m].copy()

    def blocks(self) -> np.ndarray:
        """Return the data as a (p, m, p, m) array indexed [k, s, l, t]."""
        return self.data.reshape(self.p, self.m, self.p, self.m)

    def with_data(self, data, symmetric: Optional[bool] = None) -> "BlockMatrix":
        """New matrix with the same (p, m) structure and different entries."""
        return BlockMatrix(
            data=data,
            p=self.p,
            m=self.m,
            symmetric=self.symmetric if symmetric is None else symmetric,
        )

    def symmetrized(self) -> "BlockMatrix":
        return self.with_data(self.data, symmetric=True)

    def is_symmetric(self, tol: float = SYMMETRY_TOL) -> bool:
        return bool(np.max(np.abs(self.data - self.data.T), initial=0.0) <= tol)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


class SpectralDecomposition(BaseModel):
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray = Field(..., description="Real eigenvalues in ascending order.")
    eigenvectors: np.ndarray = Field(..., description="Orthonormal eigenvectors stored as columns.")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    def reconstruct(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        """Return P diag(values) P^T, using the stored eigenvalues by default."""
        d = self.eigenvalues if values is None else values
        return (self.eigenvectors * d) @ self.eigenvectors.T


class BlockNormMap(BaseModel):
    """p x p matrix of block Frobenius norms, the C(.) operator output."""

    values: np.ndarray = Field(..., description="Nonnegative p x p block norm matrix.")

    class Config:
        arbitrary_types_allowed = True
        frozen = True

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def support(self, theta: float = 0.0) -> frozenset:
        """Unordered off-diagonal pairs (q, l), q < l, whose norm exceeds theta."""
        rows, cols = np.nonzero(np.triu(self.values, k=1) > theta)
        return frozenset((int(q), int(l)) for q, l in zip(rows, cols))


class NormReport(BaseModel):
    """Matrix norms used throughout the theory checks."""

    frobenius: float = Field(..., ge=0.0, description="Frobenius norm.")
    operator: Optional[float] = Field(None, ge=0.0, description="Spectral norm (symmetric input only).")
    max_abs: float = Field(..., ge=0.0, description="Largest absolute entry.")
    one_infinity: float = Field(..., ge=0.0, description="Largest absolute row sum.")


MatrixLike = Union[BlockMatrix, np.ndarray]


def as_array(a: MatrixLike) -> np.ndarray:
    """Dense float array view of a BlockMatrix or array-like."""
    return a.data if isinstance(a, BlockMatrix) else np.asarray(a, dtype=float)


def sym_eig(a: MatrixLike) -> SpectralDecomposition:
    """
    Eigen-decompose a symmetric matrix.

    Args:
        a: Symmetric matrix (BlockMatrix or square array).

    Returns:
        Ascending eigenvalues with orthonormal eigenvectors.

    Raises:
        InvalidInputError: If the matrix has non-finite entries or is not square.
        NumericError: If LAPACK fails to converge.
    """
    data = as_array(a)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise InvalidInputError("eigendecomposition needs a square matrix", shape=data.shape)
    if not np.all(np.isfinite(data)):
        raise InvalidInputError("matrix has non-finite entries", dim=data.shape[0])
    try:
        eigenvalues, eigenvectors = linalg.eigh(0.5 * (data + data.T), check_finite=False)
    except linalg.LinAlgError as e:
        # LAPACK reports how many off-diagonal elements failed to converge.
        raise NumericError(
            "symmetric eigendecomposition did not converge",
            dim=data.shape[0],
            iterations=str(e),
        ) from e
    return SpectralDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def block_norm_map(a: BlockMatrix) -> BlockNormMap:
    """Map every m x m block to its Frobenius norm."""
    return BlockNormMap(values=np.linalg.norm(a.blocks(), axis=(1, 3)))


def bvec(a: BlockMatrix) -> np.ndarray:
    """
    Block vectorization: vec(A_11), vec(A_21), ..., vec(A_p1), vec(A_12), ...

    vec stacks the columns of each m x m block.
    """
    # blocks()[k, s, l, t] -> order (l, k, t, s): block column, block row, column, row
    return a.blocks().transpose(2, 0, 3, 1).reshape(-1).copy()


def tracy_singh(a: BlockMatrix, b: BlockMatrix, cap: Optional[int] = None) -> np.ndarray:
    """
    Tracy-Singh product A [x] B = [[A_ij (x) B_kl]_kl]_ij.

    Row index of the result is ((i*p + k)*m + s)*m + u for A-block row i,
    B-block row k, row s inside A_ij and row u inside B_kl; columns follow
    the same nesting. So the m^2 x m^2 block at block-pair rows (i, k) and
    block-pair columns (j, l) is A_ij (x) B_kl. For m = 1 this equals the
    Kronecker product np.kron(A, B).

    Worked example (p = 2, m = 1, A = [[1, 2], [3, 4]], B = I_2): rows are
    ordered (i, k) = (0,0), (0,1), (1,0), (1,1) and the result is
    [[1,0,2,0],[0,1,0,2],[3,0,4,0],[0,3,0,4]].

    Args:
        a: Left factor.
        b: Right factor with the same (p, m) structure.
        cap: Maximum number of output entries; defaults to the configured cap.

    Returns:
        Dense (mp)^2 x (mp)^2 array.
    """
    if (a.p, a.m) != (b.p, b.m):
        raise InvalidInputError("Tracy-Singh factors need the same block structure", a=(a.p, a.m), b=(b.p, b.m))
    limit = get_config().tracy_singh_cap if cap is None else cap
    side = a.dim ** 2
    if side * side > limit:
        raise ResourceLimitError("Tracy-Singh product too large", requested=side * side, limit=limit)
    product = np.einsum("iajc,kbld->ikabjlcd", a.blocks(), b.blocks())
    return product.reshape(side, side)


def pair_indices(pairs: Sequence[Tuple[int, int]], p: int, m: int) -> np.ndarray:
    """Row/column indices of a Tracy-Singh product covering the given block pairs."""
    width = m * m
    idx = [np.arange(width) + (j * p + k) * width for j, k in pairs]
    return np.concatenate(idx) if idx else np.zeros(0, dtype=int)


def norm_one_inf(a: MatrixLike) -> float:
    """Largest absolute row sum."""
    data = as_array(a)
    return float(np.max(np.sum(np.abs(data), axis=1), initial=0.0))


def norms(a: MatrixLike, operator: bool = True) -> NormReport:
    """
    Frobenius, operator, max-abs and 1-infinity norms.

    Args:
        a: Input matrix.
        operator: Also compute the spectral norm through sym_eig.

    Raises:
        UnsupportedOperationError: If the spectral norm is requested for an asymmetric matrix.
    """
    data = as_array(a)
    if not np.all(np.isfinite(data)):
        raise InvalidInputError("matrix has non-finite entries", shape=data.shape)
    op_norm = None
    if operator:
        if np.max(np.abs(data - data.T), initial=0.0) > SYMMETRY_TOL:
            raise UnsupportedOperationError("operator norm is only supported for symmetric matrices")
        op_norm = float(np.max(np.abs(sym_eig(data).eigenvalues), initial=0.0))
    return NormReport(
        frobenius=float(np.linalg.norm(data)),
        operator=op_norm,
        max_abs=float(np.max(np.abs(data), initial=0.0)),
        one_infinity=norm_one_inf(data),
    )


def log_det(a: MatrixLike) -> float:
    """
    Log-determinant of a symmetric positive definite matrix.

    Raises:
        InvalidInputError: If the matrix is not positive definite.
    """
    data = as_array(a)
    try:
        chol = linalg.cholesky(0.5 * (data + data.T), lower=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise InvalidInputError("matrix is not positive definite", dim=data.shape[0]) from e
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def is_positive_definite(a: MatrixLike) -> bool:
    try:
        log_det(a)
    except InvalidInputError:
        return False
    return True


def spd_inverse(a: MatrixLike) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, symmetrized."""
    data = as_array(a)
    try:
        factor = linalg.cho_factor(0.5 * (data + data.T))
    except (linalg.LinAlgError, ValueError) as e:
        raise InvalidInputError("matrix is singular or not positive definite", dim=data.shape[0]) from e
    inv = linalg.cho_solve(factor, np.eye(data.shape[0]))
    return 0.5 * (inv + inv.T)
