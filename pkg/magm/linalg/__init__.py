"""
Dense block-matrix linear algebra for magm.
"""

from magm.linalg.block_matrix import (
    BlockMatrix,
    BlockNormMap,
    MatrixLike,
    NormReport,
    SpectralDecomposition,
    as_array,
    block_norm_map,
    bvec,
    is_positive_definite,
    log_det,
    norm_one_inf,
    norms,
    pair_indices,
    spd_inverse,
    sym_eig,
    tracy_singh,
)
