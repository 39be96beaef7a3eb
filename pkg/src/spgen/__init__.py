"""Sparse kernel compiler: schedule, unroll and bake a compile-time-known sparse
operand into SIMT kernel programs, then run them on a deterministic virtual GPU."""

from .codegen import MachineParams, compile_conv, compile_spmm, validate_program
from .core import (
    ConvProblem,
    DenseMatrix,
    SparseMatrix,
    SpmmProblem,
    Tensor3,
    density,
    sparse_from_parts,
    sparse_random,
)
from .schedule import TileConfig, make_schedule
from .tuner import enumerate_configs, tune
from .vgpu import estimate_cost, execute

__all__ = [
    "ConvProblem", "DenseMatrix", "MachineParams", "SparseMatrix", "SpmmProblem", "Tensor3",
    "TileConfig", "compile_conv", "compile_spmm", "density", "enumerate_configs",
    "estimate_cost", "execute", "make_schedule", "sparse_from_parts", "sparse_random",
    "tune", "validate_program",
]
