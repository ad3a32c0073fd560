"""
Matrix file formats.

CSV: first line is the header ``rows,cols,p,m``, second line the four
integers, then ``rows`` lines of comma-separated values (row-major, 17
significant digits so values round-trip exactly).

Binary: the magic bytes ``MAGM``, four little-endian uint32 values
(rows, cols, p, m), then rows*cols little-endian float64 values in
row-major order.
"""

import io
import logging
from pathlib import Path
from typing import Union

import numpy as np

from magm.core.errors import InvalidInputError
from magm.linalg.block_matrix import BlockMatrix

logger = logging.getLogger(__name__)

CSV_HEADER = "rows,cols,p,m"
MAGIC = b"MAGM"
_HEADER_DTYPE = np.dtype("<u4")
_VALUE_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


def write_matrix_csv(matrix: BlockMatrix, path: PathLike) -> Path:
    """Write a block matrix in the CSV matrix format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = matrix.data.shape
    buffer = io.StringIO()
    buffer.write(f"{CSV_HEADER}\n{rows},{cols},{matrix.p},{matrix.m}\n")
    np.savetxt(buffer, matrix.data, delimiter=",", fmt="%.17g")
    path.write_text(buffer.getvalue())
    logger.debug(f"Wrote {rows}x{cols} matrix to {path}")
    return path


def read_matrix_csv(path: PathLike, symmetric: bool = True) -> BlockMatrix:
    """Read a block matrix written by write_matrix_csv."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if len(lines) < 2 or lines[0].strip() != CSV_HEADER:
        raise InvalidInputError("not a matrix CSV file", path=str(path))
    try:
        rows, cols, p, m = (int(v) for v in lines[1].split(","))
        data = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
    except ValueError as e:
        raise InvalidInputError("malformed matrix CSV", path=str(path)) from e
    if data.shape != (rows, cols):
        raise InvalidInputError("matrix CSV body does not match header", path=str(path), shape=data.shape)
    return BlockMatrix(data=data, p=p, m=m, symmetric=symmetric)


def write_matrix_binary(matrix: BlockMatrix, path: PathLike) -> Path:
    """Write a block matrix in the MAGM binary format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = matrix.data.shape
    header = np.array([rows, cols, matrix.p, matrix.m], dtype=_HEADER_DTYPE)
    path.write_bytes(MAGIC + header.tobytes() + matrix.data.astype(_VALUE_DTYPE).tobytes(order="C"))
    return path


def read_matrix_binary(path: PathLike, symmetric: bool = True) -> BlockMatrix:
    """Read a block matrix written by write_matrix_binary."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise InvalidInputError("missing MAGM magic bytes", path=str(path))
    header_end = 4 + 4 * _HEADER_DTYPE.itemsize
    rows, cols, p, m = (int(v) for v in np.frombuffer(raw[4:header_end], dtype=_HEADER_DTYPE))
    values = np.frombuffer(raw[header_end:], dtype=_VALUE_DTYPE)
    if values.size != rows * cols:
        raise InvalidInputError("binary matrix payload has the wrong length", path=str(path), size=values.size)
    return BlockMatrix(data=values.reshape(rows, cols), p=p, m=m, symmetric=symmetric)


def read_matrix(path: PathLike, symmetric: bool = True) -> BlockMatrix:
    """Read either format, sniffing the magic bytes."""
    path = Path(path)
    with path.open("rb") as handle:
        magic = handle.read(4)
    if magic == MAGIC:
        return read_matrix_binary(path, symmetric=symmetric)
    return read_matrix_csv(path, symmetric=symmetric)


def write_matrix(matrix: BlockMatrix, path: PathLike) -> Path:
    """Write by extension: ``.bin``/``.magm`` binary, anything else CSV."""
    path = Path(path)
    if path.suffix.lower() in (".bin", ".magm"):
        return write_matrix_binary(matrix, path)
    return write_matrix_csv(matrix, path)
