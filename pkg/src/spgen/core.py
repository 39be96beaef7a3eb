"""Matrix, tensor and problem types shared by every stage of the pipeline.

All arrays are stored as read-only numpy arrays; values use float32.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SparseFormatError(ValueError):
    """Raised when sparse matrix parts violate the compressed-row invariants."""

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed-row sparse matrix with sorted, duplicate-free columns.

    Stored zeros are rejected so that ``nnz`` always counts real work.
    """

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        col_idx = np.asarray(self.col_idx, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float32)
        _validate(self.rows, self.cols, row_ptr, col_idx, values)
        object.__setattr__(self, "row_ptr", _frozen(row_ptr))
        object.__setattr__(self, "col_idx", _frozen(col_idx))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def nnz(self) -> int:
        return int(self.col_idx.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry, aligned with ``col_idx``."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), self.row_nnz())

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values.view(np.uint32), other.values.view(np.uint32))
        )

    def __repr__(self):
        return f"SparseMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def _validate(rows, cols, row_ptr, col_idx, values):
    if rows < 0 or cols < 0:
        raise SparseFormatError(f"negative shape ({rows}, {cols})")
    if row_ptr.ndim != 1 or row_ptr.shape[0] != rows + 1:
        raise SparseFormatError(
            f"row_ptr has length {row_ptr.shape[0]}, expected rows+1 = {rows + 1}"
        )
    if row_ptr[0] != 0:
        raise SparseFormatError("row_ptr[0] must be 0", row=0)
    steps = np.diff(row_ptr)
    bad = np.flatnonzero(steps < 0)
    if bad.size:
        raise SparseFormatError("row offsets decrease (monotonicity violation)", row=int(bad[0]))
    nnz = col_idx.shape[0]
    if row_ptr[-1] != nnz:
        raise SparseFormatError(f"row_ptr[rows] = {row_ptr[-1]} but col_idx has {nnz} entries")
    if values.shape[0] != nnz:
        raise SparseFormatError(f"values has {values.shape[0]} entries, expected nnz = {nnz}")
    for r in range(rows):
        cs = col_idx[row_ptr[r]:row_ptr[r + 1]]
        if cs.size == 0:
            continue
        if cs[0] < 0 or cs[-1] >= cols or np.any(cs < 0) or np.any(cs >= cols):
            raise SparseFormatError(f"column index out of range [0, {cols})", row=r)
        if np.any(np.diff(cs) <= 0):
            raise SparseFormatError("column indices unsorted or duplicated", row=r)
        vs = values[row_ptr[r]:row_ptr[r + 1]]
        if not np.all(np.isfinite(vs)):
            raise SparseFormatError("non-finite value", row=r)
        if np.any(vs == 0):
            raise SparseFormatError("explicit zero stored", row=r)


def sparse_from_parts(rows, cols, row_ptr, col_idx, values) -> SparseMatrix:
    return SparseMatrix(int(rows), int(cols), row_ptr, col_idx, values)


def random_values(count: int, rng: np.random.Generator, signed: bool = False) -> np.ndarray:
    """Nonzero float32 weights: magnitudes uniform in [0.25, 1), optionally with random sign."""
    vals = rng.uniform(0.25, 1.0, size=count).astype(np.float32)
    if signed:
        vals *= np.where(rng.random(count) < 0.5, -1.0, 1.0).astype(np.float32)
    return vals


def sparse_random(rows: int, cols: int, density: float, seed: int, signed: bool = False) -> SparseMatrix:
    """Seeded random sparse matrix.

    Generator (frozen): ``numpy.random.default_rng(seed)`` draws
    ``round_half_up(rows*cols*density)`` flat positions without replacement
    (``Generator.choice``), which are sorted; the same generator then
    supplies the values via :func:`random_values`.
    """
    if not (0.0 < density <= 1.0):
        raise ValueError(f"density must be in (0, 1], got {density}")
    total = rows * cols
    nnz = min(total, round_half_up(total * density))
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=nnz, replace=False)) if nnz else np.zeros(0, np.int64)
    r = flat // cols if cols else flat
    c = flat % cols if cols else flat
    values = random_values(nnz, rng, signed=signed)
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.add.at(row_ptr, r + 1, 1)
    return SparseMatrix(rows, cols, np.cumsum(row_ptr), c, values)


def density(m: SparseMatrix) -> float:
    total = m.rows * m.cols
    return m.nnz / total if total else 0.0


def sparse_from_dense(dense: np.ndarray | DenseMatrix) -> SparseMatrix:
    """Re-sparsify a dense array, dropping exact zeros."""
    arr = dense.data if isinstance(dense, DenseMatrix) else np.asarray(dense, dtype=np.float32)
    r, c = np.nonzero(arr)
    row_ptr = np.zeros(arr.shape[0] + 1, dtype=np.int64)
    np.add.at(row_ptr, r + 1, 1)
    return SparseMatrix(arr.shape[0], arr.shape[1], np.cumsum(row_ptr), c, arr[r, c])


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major float32 matrix; ``data`` has shape (rows, cols)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, order="C")
        if arr.ndim != 2:
            raise ValueError(f"DenseMatrix needs a 2-D array, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self.data.view(np.uint32), other.data.view(np.uint32)
        )


@dataclass(frozen=True, eq=False)
class Tensor3:
    """Channel-major (CHW) float32 activation tensor."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32, order="C")
        if arr.ndim != 3:
            raise ValueError(f"Tensor3 needs a 3-D array, got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, Tensor3):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self.data.view(np.uint32), other.data.view(np.uint32)
        )


@dataclass(frozen=True)
class SpmmProblem:
    m: int
    k: int
    n: int
    a: SparseMatrix

    def __post_init__(self):
        if (self.a.rows, self.a.cols) != (self.m, self.k):
            raise ValueError(f"A is {self.a.rows}x{self.a.cols}, expected {self.m}x{self.k}")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @classmethod
    def from_matrix(cls, a: SparseMatrix, n: int) -> SpmmProblem:
        return cls(a.rows, a.cols, n, a)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.m, self.k, self.n)


@dataclass(frozen=True)
class ConvProblem:
    """3x3, stride 1, pad 1 convolution whose filter bank is a sparse c_out x (c_in*9) matrix.

    Filter column ``k`` decodes as ``(c_in, dy, dx) = (k // 9, (k % 9) // 3, k % 3)``.
    """

    height: int
    width: int
    c_in: int
    c_out: int
    filter: SparseMatrix

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be >= 1")
        if (self.filter.rows, self.filter.cols) != (self.c_out, self.c_in * 9):
            raise ValueError(
                f"filter is {self.filter.rows}x{self.filter.cols}, "
                f"expected {self.c_out}x{self.c_in * 9}"
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        """Dimensions (M, K, N) of the induced virtual SpMM."""
        return (self.c_out, self.c_in * 9, self.height * self.width)

    def as_spmm(self) -> SpmmProblem:
        m, k, n = self.dims
        return SpmmProblem(m, k, n, self.filter)


def decode_tap(k: int) -> tuple[int, int, int]:
    return k // 9, (k % 9) // 3, k % 3
