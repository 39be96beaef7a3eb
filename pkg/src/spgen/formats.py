"""On-disk formats for matrices and tensors.

SMTX text (sparse)::

    rows,cols,nnz
    <rows+1 row offsets>
    <nnz column indices>
    <nnz values>            # optional; synthesized from a seed when absent

Dense binary: ``SRTD`` + rows, cols as little-endian u32 + row-major f32 LE.
Tensor binary: ``SRT3`` + C, H, W as little-endian u32 + CHW f32 LE.
Dense text: ``rows cols`` then one row per line. Meant for debugging and
not guaranteed lossless, although :func:`dumps_dense_text` prints the
shortest digits that round-trip float32.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import DenseMatrix, SparseMatrix, Tensor3, random_values

DENSE_MAGIC = b"SRTD"
TENSOR_MAGIC = b"SRT3"


class FormatError(ValueError):
    pass


def fmt_f32(x) -> str:
    """Shortest decimal string that parses back to the same float32."""
    return str(np.float32(x))


def _ints(line: str) -> list[int]:
    return [int(t) for t in line.split()]


# --- SMTX -------------------------------------------------------------------

def dumps_smtx(a: SparseMatrix, with_values: bool = True) -> str:
    lines = [
        f"{a.rows},{a.cols},{a.nnz}",
        " ".join(str(int(x)) for x in a.row_ptr),
        " ".join(str(int(x)) for x in a.col_idx),
    ]
    if with_values:
        lines.append(" ".join(fmt_f32(v) for v in a.values))
    return "\n".join(lines) + "\n"


def loads_smtx(text: str, value_seed: int | None = None) -> SparseMatrix:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2:
        raise FormatError("SMTX needs at least a header and a row-offset line")
    try:
        rows, cols, nnz = (int(t) for t in lines[0].split(","))
    except ValueError as exc:
        raise FormatError(f"bad SMTX header {lines[0]!r}") from exc
    row_ptr = _ints(lines[1])
    col_idx = _ints(lines[2]) if len(lines) > 2 else []
    if len(col_idx) != nnz:
        raise FormatError(f"header says nnz={nnz} but {len(col_idx)} column indices given")
    if len(lines) > 3 and (lines[3].strip() or nnz == 0):
        values = np.array([np.float32(t) for t in lines[3].split()], dtype=np.float32)
    elif nnz == 0:
        values = np.zeros(0, np.float32)
    else:
        if value_seed is None:
            raise FormatError("SMTX file has no values line; a value seed is required")
        values = random_values(nnz, np.random.default_rng(value_seed))
    return SparseMatrix(rows, cols, row_ptr, col_idx, values)


def write_smtx(path, a: SparseMatrix, with_values: bool = True) -> None:
    Path(path).write_text(dumps_smtx(a, with_values))


def read_smtx(path, value_seed: int | None = None) -> SparseMatrix:
    return loads_smtx(Path(path).read_text(), value_seed)


# --- dense / tensor binary --------------------------------------------------

def dense_to_bytes(d: DenseMatrix) -> bytes:
    return DENSE_MAGIC + struct.pack("<II", d.rows, d.cols) + d.data.astype("<f4").tobytes()


def dense_from_bytes(buf: bytes) -> DenseMatrix:
    if buf[:4] != DENSE_MAGIC:
        raise FormatError(f"bad dense magic {buf[:4]!r}")
    rows, cols = struct.unpack_from("<II", buf, 4)
    body = buf[12:]
    if len(body) != rows * cols * 4:
        raise FormatError(f"expected {rows * cols * 4} payload bytes, got {len(body)}")
    return DenseMatrix(np.frombuffer(body, dtype="<f4").reshape(rows, cols))


def tensor_to_bytes(t: Tensor3) -> bytes:
    return TENSOR_MAGIC + struct.pack("<III", *t.shape) + t.data.astype("<f4").tobytes()


def tensor_from_bytes(buf: bytes) -> Tensor3:
    if buf[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {buf[:4]!r}")
    c, h, w = struct.unpack_from("<III", buf, 4)
    body = buf[16:]
    if len(body) != c * h * w * 4:
        raise FormatError(f"expected {c * h * w * 4} payload bytes, got {len(body)}")
    return Tensor3(np.frombuffer(body, dtype="<f4").reshape(c, h, w))


def write_binary(path, obj: DenseMatrix | Tensor3) -> None:
    data = tensor_to_bytes(obj) if isinstance(obj, Tensor3) else dense_to_bytes(obj)
    Path(path).write_bytes(data)


def read_binary(path) -> DenseMatrix | Tensor3:
    buf = Path(path).read_bytes()
    if buf[:4] == TENSOR_MAGIC:
        return tensor_from_bytes(buf)
    return dense_from_bytes(buf)


# --- dense text (debugging) -------------------------------------------------

def dumps_dense_text(d: DenseMatrix) -> str:
    out = [f"{d.rows} {d.cols}"]
    out += [" ".join(fmt_f32(v) for v in row) for row in d.data]
    return "\n".join(out) + "\n"


def loads_dense_text(text: str) -> DenseMatrix:
    lines = text.strip("\n").split("\n")
    rows, cols = _ints(lines[0])
    data = np.array([[float(t) for t in ln.split()] for ln in lines[1:1 + rows]], dtype=np.float32)
    return DenseMatrix(data.reshape(rows, cols))
