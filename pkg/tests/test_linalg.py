"""
Tests for the block-matrix kernel and matrix file formats.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from magm.core.errors import InvalidInputError, ResourceLimitError, UnsupportedOperationError
from magm.linalg.block_matrix import (
    BlockMatrix,
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
from magm.linalg.serialization import read_matrix, read_matrix_csv, write_matrix


def test_block_matrix_rejects_wrong_shape():
    """Test that the data shape must match (p*m) x (p*m)."""
    with pytest.raises(InvalidInputError):
        BlockMatrix(data=np.eye(3), p=2, m=2)
    with pytest.raises(InvalidInputError):
        BlockMatrix.from_array(np.ones(4), p=2, m=1)
    with pytest.raises(InvalidInputError):
        BlockMatrix.identity(2, 1).with_data(np.eye(3))


def test_block_matrix_field_errors_still_validated():
    """Test that non-positive sizes are rejected by field validation."""
    with pytest.raises(ValidationError):
        BlockMatrix(data=np.zeros((0, 0)), p=0, m=1)


def test_block_matrix_symmetrizes_and_freezes():
    """Test symmetrization on construction and read-only data."""
    a = BlockMatrix(data=[[1.0, 2.0], [0.0, 1.0]], p=2, m=1)
    np.testing.assert_allclose(a.data, [[1.0, 1.0], [1.0, 1.0]])
    assert a.is_symmetric()
    with pytest.raises(ValueError):
        a.data[0, 0] = 5.0


def test_block_extraction():
    """Test that block(k, l) returns the right m x m sub-matrix."""
    data = np.arange(16, dtype=float).reshape(4, 4)
    a = BlockMatrix(data=data, p=2, m=2, symmetric=False)
    np.testing.assert_array_equal(a.block(0, 1), [[2.0, 3.0], [6.0, 7.0]])
    np.testing.assert_array_equal(a.block(1, 0), [[8.0, 9.0], [12.0, 13.0]])


def test_sym_eig_examples():
    """Test eigenvalues of small symmetric matrices."""
    np.testing.assert_allclose(sym_eig(np.eye(3)).eigenvalues, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(sym_eig(np.diag([2.0, 5.0])).eigenvalues, [2.0, 5.0])
    decomposition = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(decomposition.eigenvalues, [1.0, 3.0])
    np.testing.assert_allclose(decomposition.reconstruct(), [[2.0, 1.0], [1.0, 2.0]], atol=1e-12)


def test_sym_eig_rejects_non_finite():
    """Test that NaN input is an input error."""
    with pytest.raises(InvalidInputError):
        sym_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_sym_eig_trace_and_determinant(make_spd):
    """Test that eigenvalues sum to the trace and multiply to the determinant."""
    for p, m in [(2, 1), (3, 2), (4, 3)]:
        a = make_spd(p, m)
        eigenvalues = sym_eig(a).eigenvalues
        assert np.sum(eigenvalues) == pytest.approx(np.trace(a.data), rel=1e-10)
        assert np.prod(eigenvalues) == pytest.approx(np.linalg.det(a.data), rel=1e-8)
        assert np.all(np.diff(eigenvalues) >= 0.0)


def test_block_norm_map():
    """Test block Frobenius norms."""
    single = BlockMatrix(data=[[3.0, 4.0], [0.0, 0.0]], p=1, m=2, symmetric=False)
    assert block_norm_map(single).values[0, 0] == pytest.approx(5.0)

    scalar = BlockMatrix(data=[[1.0, -2.0], [-2.0, 3.0]], p=2, m=1)
    np.testing.assert_allclose(block_norm_map(scalar).values, [[1.0, 2.0], [2.0, 3.0]])

    assert not np.any(block_norm_map(BlockMatrix.zeros(3, 2)).values)


def test_support_is_upper_triangular():
    """Test that support lists each unordered pair once."""
    values = np.zeros((4, 4))
    values[1, 3] = values[3, 1] = 0.7
    a = BlockMatrix(data=values, p=4, m=1)
    assert block_norm_map(a).support() == frozenset({(1, 3)})
    assert block_norm_map(a).support(theta=1.0) == frozenset()


def test_bvec_column_of_blocks_order():
    """Test that bvec stacks A11, A21, A12, A22."""
    a = BlockMatrix(data=[[1.0, 2.0], [3.0, 4.0]], p=2, m=1, symmetric=False)
    np.testing.assert_array_equal(bvec(a), [1.0, 3.0, 2.0, 4.0])


def test_tracy_singh_worked_example():
    """Test the p=2, m=1 product against a four-index loop."""
    a = BlockMatrix(data=[[1.0, 2.0], [3.0, 4.0]], p=2, m=1, symmetric=False)
    b = BlockMatrix.identity(2, 1)
    product = tracy_singh(a, b)
    expected = np.zeros((4, 4))
    for i in range(2):
        for k in range(2):
            for j in range(2):
                for l in range(2):
                    expected[i * 2 + k, j * 2 + l] = a.data[i, j] * b.data[k, l]
    np.testing.assert_array_equal(product, expected)
    np.testing.assert_array_equal(
        product, [[1, 0, 2, 0], [0, 1, 0, 2], [3, 0, 4, 0], [0, 3, 0, 4]]
    )


def test_tracy_singh_blocks_are_kronecker_products(rng):
    """Test that block pair ((j, k), (l, q)) equals A_jl (x) B_kq."""
    p, m = 2, 2
    a = BlockMatrix(data=rng.standard_normal((4, 4)), p=p, m=m, symmetric=False)
    b = BlockMatrix(data=rng.standard_normal((4, 4)), p=p, m=m, symmetric=False)
    product = tracy_singh(a, b)
    for j, k, l, q in [(0, 0, 0, 0), (0, 1, 1, 0), (1, 1, 0, 1)]:
        rows = pair_indices([(j, k)], p, m)
        cols = pair_indices([(l, q)], p, m)
        np.testing.assert_allclose(product[np.ix_(rows, cols)], np.kron(a.block(j, l), b.block(k, q)))


def test_tracy_singh_block_norms_factor(rng):
    """Test that the block norm map of a Tracy-Singh product is the Kronecker product of block norm maps."""
    for p, m in [(2, 1), (2, 2), (3, 2)]:
        dim = p * m
        a = BlockMatrix(data=rng.standard_normal((dim, dim)), p=p, m=m, symmetric=False)
        b = BlockMatrix(data=rng.standard_normal((dim, dim)), p=p, m=m, symmetric=False)
        product = tracy_singh(a, b).reshape(p, p, m, m, p, p, m, m)
        norms_of_product = np.linalg.norm(product, axis=(2, 3, 6, 7)).reshape(p * p, p * p)
        np.testing.assert_allclose(
            norms_of_product, np.kron(block_norm_map(a).values, block_norm_map(b).values), rtol=1e-10
        )


def test_tracy_singh_identity_and_kron():
    """Test I [x] I = I and the m=1 Kronecker reduction."""
    np.testing.assert_array_equal(tracy_singh(BlockMatrix.identity(3, 1), BlockMatrix.identity(3, 1)), np.eye(9))
    a = BlockMatrix(data=[[2.0, 1.0], [1.0, 3.0]], p=2, m=1)
    np.testing.assert_allclose(tracy_singh(a, a), np.kron(a.data, a.data))


def test_tracy_singh_cap():
    """Test the output size cap."""
    a = BlockMatrix.identity(2, 2)
    with pytest.raises(ResourceLimitError) as excinfo:
        tracy_singh(a, a, cap=100)
    assert excinfo.value.requested == 256
    assert excinfo.value.limit == 100
    # The cap counts output entries: (mp)^4 = 256 here.
    assert tracy_singh(a, a, cap=256).shape == (16, 16)
    with pytest.raises(ResourceLimitError):
        tracy_singh(a, a, cap=255)


def test_norms():
    """Test the norm report on known matrices."""
    report = norms(np.eye(4))
    assert report.frobenius == pytest.approx(2.0)
    assert report.operator == pytest.approx(1.0)
    assert report.max_abs == 1.0

    assert norms(np.array([[3.0, 4.0], [4.0, 3.0]])).operator == pytest.approx(7.0)
    zero = norms(np.zeros((2, 2)))
    assert zero.frobenius == zero.operator == zero.max_abs == zero.one_infinity == 0.0

    with pytest.raises(UnsupportedOperationError):
        norms(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_norm_one_inf():
    """Test the largest absolute row sum."""
    assert norm_one_inf(np.array([[1.0, -2.0], [0.5, 0.5]])) == pytest.approx(3.0)


def test_log_det_and_inverse():
    """Test the Cholesky-based helpers."""
    assert log_det(2.0 * np.eye(3)) == pytest.approx(3.0 * math.log(2.0))
    np.testing.assert_allclose(spd_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    assert is_positive_definite(np.eye(2))
    assert not is_positive_definite(np.diag([1.0, -1.0]))
    with pytest.raises(InvalidInputError):
        log_det(np.diag([1.0, 0.0]))


def test_matrix_csv_file(tmp_path, rng):
    """Test that the CSV format keeps values exactly."""
    a = BlockMatrix(data=rng.standard_normal((6, 6)), p=3, m=2)
    path = write_matrix(a, tmp_path / "omega.csv")
    assert path.read_text().splitlines()[:2] == ["rows,cols,p,m", "6,6,3,2"]
    loaded = read_matrix(path)
    assert (loaded.p, loaded.m) == (3, 2)
    np.testing.assert_array_equal(loaded.data, a.data)


def test_matrix_binary_file(tmp_path, rng):
    """Test the binary format and magic sniffing."""
    a = BlockMatrix(data=rng.standard_normal((4, 4)), p=4, m=1)
    path = write_matrix(a, tmp_path / "omega.bin")
    assert path.read_bytes()[:4] == b"MAGM"
    np.testing.assert_array_equal(read_matrix(path).data, a.data)


def test_matrix_csv_rejects_bad_header(tmp_path):
    """Test that a plain CSV is not accepted as a matrix file."""
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidInputError):
        read_matrix_csv(path)


def test_matrix_csv_rejects_header_structure_mismatch(tmp_path):
    """Test that a header whose p, m disagree with the body is an input error."""
    path = tmp_path / "mismatch.csv"
    path.write_text("rows,cols,p,m\n2,2,3,1\n1,0\n0,1\n")
    with pytest.raises(InvalidInputError):
        read_matrix(path)
