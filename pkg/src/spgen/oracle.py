"""Naive reference implementations used to check generated kernels.

Nothing here shares code with the scheduler, code generator or executor.
All oracles accumulate in float64 and round to float32 once at the end.
"""

from __future__ import annotations

import numpy as np

from .core import DenseMatrix, SparseMatrix, Tensor3


def to_dense(a: SparseMatrix) -> DenseMatrix:
    out = np.zeros((a.rows, a.cols), dtype=np.float32)
    for r in range(a.rows):
        for idx in range(a.row_ptr[r], a.row_ptr[r + 1]):
            out[r, a.col_idx[idx]] = a.values[idx]
    return DenseMatrix(out)


def _gemm64(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # loop order (m, k, n); the n loop is vectorized
    m, k = a.shape
    c = np.zeros((m, b.shape[1]), dtype=np.float64)
    for i in range(m):
        for kk in range(k):
            c[i] += a[i, kk] * b[kk]
    return c


def gemm_dense(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    if a.cols != b.rows:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return DenseMatrix(_gemm64(a.data.astype(np.float64), b.data.astype(np.float64)).astype(np.float32))


def virtual_b_lookup(x: Tensor3, c_in: int, dy: int, dx: int, n: int) -> np.float32:
    """Entry of the implicit im2col matrix for tap (c_in, dy, dx) at output pixel n."""
    y, xx = divmod(n, x.width)
    sy, sx = y + dy - 1, xx + dx - 1
    if 0 <= sy < x.height and 0 <= sx < x.width:
        return x.data[c_in, sy, sx]
    return np.float32(0)


def im2col(x: Tensor3, height: int, width: int) -> DenseMatrix:
    """Materialize the (C*9) x (H*W) receptive-field matrix for a 3x3, pad-1 conv."""
    if (x.height, x.width) != (height, width):
        raise ValueError(f"tensor is {x.height}x{x.width}, expected {height}x{width}")
    c = x.channels
    out = np.zeros((c * 9, height * width), dtype=np.float32)
    for k in range(c * 9):
        ch, dy, dx = k // 9, (k % 9) // 3, k % 3
        for n in range(height * width):
            y, xx = divmod(n, width)
            sy, sx = y + dy - 1, xx + dx - 1
            if 0 <= sy < height and 0 <= sx < width:
                out[k, n] = x.data[ch, sy, sx]
    return DenseMatrix(out)


def conv_direct(x: Tensor3, filter_dense: DenseMatrix) -> Tensor3:
    """Direct 3x3 convolution, stride 1, zero padding 1.

    Loop order: output channel, input channel, dy, dx, with the spatial
    loops vectorized over a zero-padded copy of the input.
    """
    c_in, h, w = x.shape
    c_out = filter_dense.rows
    if filter_dense.cols != c_in * 9:
        raise ValueError(f"filter has {filter_dense.cols} columns, expected {c_in * 9}")
    padded = np.zeros((c_in, h + 2, w + 2), dtype=np.float64)
    padded[:, 1:-1, 1:-1] = x.data
    wts = filter_dense.data.astype(np.float64).reshape(c_out, c_in, 3, 3)
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for co in range(c_out):
        for ci in range(c_in):
            for dy in range(3):
                for dx in range(3):
                    out[co] += wts[co, ci, dy, dx] * padded[ci, dy:dy + h, dx:dx + w]
    return Tensor3(out.astype(np.float32))


def spmm_reference(a: SparseMatrix, b: DenseMatrix) -> DenseMatrix:
    return gemm_dense(to_dense(a), b)


def relative_error(actual, expected, magnitude=None) -> float:
    """Largest elementwise ``|actual - expected| / magnitude``.

    ``magnitude`` defaults to ``|expected|``. For signed data pass the
    oracle evaluated on absolute values (``|A| @ |B|``), which bounds the
    rounding error without blowing up on cancellation. Entries whose
    magnitude is zero must match exactly.
    """
    actual = np.asarray(getattr(actual, "data", actual), dtype=np.float64)
    expected = np.asarray(getattr(expected, "data", expected), dtype=np.float64)
    if actual.shape != expected.shape:
        raise ValueError(f"shape mismatch {actual.shape} vs {expected.shape}")
    mag = np.abs(expected) if magnitude is None else np.asarray(getattr(magnitude, "data", magnitude), dtype=np.float64)
    diff = np.abs(actual - expected)
    zero = mag == 0
    if np.any(diff[zero] != 0):
        return float("inf")
    if not np.any(~zero):
        return 0.0
    return float(np.max(diff[~zero] / mag[~zero]))
