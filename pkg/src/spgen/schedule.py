"""Compile-time load balancing.

Output rows are split across block-grid rows with a greedy prefix walk
(variable rows per block), then each block row's nonzeros are dealt out to
its thread groups in column-major order so that every group except the
trailing one receives exactly ``ceil(block_nnz / gy)`` nonzeros.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import SparseMatrix, SpmmProblem, round_half_up


class ConfigError(ValueError):
    """A tiling configuration violates a named constraint."""

    def __init__(self, constraint: str, detail: str):
        super().__init__(f"{constraint}: {detail}")
        self.constraint = constraint


class Nonzero(NamedTuple):
    m: int
    k: int
    value: np.float32


@dataclass(frozen=True, order=True)
class TileConfig:
    m_blocks: int
    n_blocks: int
    gy: int
    gsy: int

    @classmethod
    def for_n(cls, m_blocks: int, n_blocks: int, gy: int, n: int) -> TileConfig:
        if n_blocks < 1 or n % n_blocks:
            raise ConfigError("divisibility", f"n_blocks={n_blocks} does not divide N={n}")
        return cls(m_blocks, n_blocks, gy, n // n_blocks)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.m_blocks, self.n_blocks, self.gy)

    @property
    def threads(self) -> int:
        return self.gy * self.gsy

    def check(self, m: int, n: int, max_threads_per_block: int | None = None) -> None:
        if self.n_blocks < 1 or n % self.n_blocks or self.gsy != n // self.n_blocks:
            raise ConfigError(
                "divisibility", f"n_blocks={self.n_blocks}, gsy={self.gsy} inconsistent with N={n}"
            )
        if not 1 <= self.m_blocks <= m:
            raise ConfigError("m_blocks", f"m_blocks={self.m_blocks} not in [1, M={m}]")
        if self.gy < 1:
            raise ConfigError("gy", f"gy={self.gy} < 1")
        if max_threads_per_block is not None and self.threads > max_threads_per_block:
            raise ConfigError(
                "max_threads_per_block",
                f"gy*gsy = {self.threads} > {max_threads_per_block}",
            )

    def __str__(self):
        return f"(m_blocks={self.m_blocks}, n_blocks={self.n_blocks}, gy={self.gy}, gsy={self.gsy})"


@dataclass(frozen=True)
class BlockSchedule:
    config: TileConfig
    row_ranges: tuple[tuple[int, int], ...]
    group_slices: tuple[tuple[tuple[Nonzero, ...], ...], ...]

    @property
    def per_group_nnz(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(len(g) for g in row) for row in self.group_slices)

    @property
    def block_nnz(self) -> tuple[int, ...]:
        return tuple(sum(len(g) for g in row) for row in self.group_slices)

    def k_list(self, row: int, group: int) -> list[int]:
        """Distinct reduction indices touched by one group, ascending."""
        return sorted({nz.k for nz in self.group_slices[row][group]})

    def n_list(self, col: int) -> range:
        g = self.config.gsy
        return range(col * g, (col + 1) * g)

    def block_imbalance(self) -> float:
        """Max over mean of block-row nonzero counts (1.0 when perfectly even)."""
        counts = self.block_nnz
        mean = sum(counts) / len(counts)
        return max(counts) / mean if mean else 1.0


def partition_blocks(a: SparseMatrix, m_blocks: int) -> list[tuple[int, int]]:
    """Greedy prefix partition of rows into ``m_blocks`` contiguous ranges.

    Block ``b`` closes after the first row at which the running nnz reaches
    ``round_half_up(total * (b+1) / m_blocks)``, or earlier if the remaining
    blocks would otherwise run out of rows.
    """
    rows = a.rows
    if not 1 <= m_blocks <= rows:
        raise ConfigError("m_blocks", f"m_blocks={m_blocks} not in [1, rows={rows}]")
    row_nnz = a.row_nnz()
    total = int(row_nnz.sum())
    ranges = []
    start = 0
    cum = 0
    for b in range(m_blocks - 1):
        target = round_half_up(total * (b + 1) / m_blocks)
        last_allowed = rows - (m_blocks - b)  # leave one row per remaining block
        r = start
        while True:
            cum += int(row_nnz[r])
            if cum >= target or r == last_allowed:
                break
            r += 1
        ranges.append((start, r + 1))
        start = r + 1
    ranges.append((start, rows))
    return ranges


def block_nonzeros(a: SparseMatrix, row_range: tuple[int, int]) -> list[Nonzero]:
    """Nonzeros of a row range, column-major: k ascending, then m ascending."""
    s, e = row_range
    lo, hi = int(a.row_ptr[s]), int(a.row_ptr[e])
    ms = np.repeat(np.arange(s, e, dtype=np.int64), np.diff(a.row_ptr[s:e + 1]))
    ks = a.col_idx[lo:hi]
    vs = a.values[lo:hi]
    order = np.lexsort((ms, ks))
    return [Nonzero(int(ms[i]), int(ks[i]), vs[i]) for i in order]


def partition_groups(a: SparseMatrix, row_range: tuple[int, int], gy: int) -> list[tuple[Nonzero, ...]]:
    nzs = block_nonzeros(a, row_range)
    target = math.ceil(len(nzs) / gy)
    return [tuple(nzs[g * target:(g + 1) * target]) for g in range(gy)]


def make_schedule(problem: SpmmProblem, config: TileConfig) -> BlockSchedule:
    config.check(problem.m, problem.n)
    ranges = partition_blocks(problem.a, config.m_blocks)
    slices = tuple(tuple(partition_groups(problem.a, r, config.gy)) for r in ranges)
    return BlockSchedule(config, tuple(ranges), slices)
