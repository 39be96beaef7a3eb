import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spgen.core import SpmmProblem, sparse_from_parts, sparse_random
from spgen.schedule import (
    ConfigError,
    TileConfig,
    make_schedule,
    partition_blocks,
    partition_groups,
)

from conftest import sparse_matrices


def prefix_partition(row_nnz, m_blocks):
    """Independent restatement of the greedy walk using prefix sums."""
    rows = len(row_nnz)
    prefix = np.concatenate([[0], np.cumsum(row_nnz)])
    total = prefix[-1]
    ends, start = [], 0
    for b in range(m_blocks - 1):
        target = math.floor(total * (b + 1) / m_blocks + 0.5)
        latest = rows - (m_blocks - b - 1)
        hits = [e for e in range(start + 1, latest + 1) if prefix[e] >= target]
        end = hits[0] if hits else latest
        ends.append(end)
        start = end
    ends.append(rows)
    starts = [0] + ends[:-1]
    return list(zip(starts, ends))


def test_partition_blocks_example(example_matrix):
    assert partition_blocks(example_matrix, 2) == [(0, 1), (1, 4)]


def test_partition_blocks_single(example_matrix):
    assert partition_blocks(example_matrix, 1) == [(0, 4)]


def test_partition_blocks_uniform():
    a = sparse_random(12, 5, 1.0, 0)
    assert partition_blocks(a, 4) == [(0, 3), (3, 6), (6, 9), (9, 12)]


def test_partition_blocks_too_many(example_matrix):
    with pytest.raises(ConfigError):
        partition_blocks(example_matrix, 5)


def test_partition_groups_example(example_matrix):
    slices = partition_groups(example_matrix, (1, 4), 2)
    assert [[(nz.m, nz.k, float(nz.value)) for nz in g] for g in slices] == [[(1, 1, 3.0)], [(3, 3, 4.0)]]
    assert len(partition_groups(example_matrix, (0, 4), 1)[0]) == 4


def test_partition_groups_ceil_fill():
    a = sparse_random(1, 5, 1.0, 0)
    assert [len(g) for g in partition_groups(a, (0, 1), 4)] == [2, 2, 1, 0]


def test_column_major_order():
    a = sparse_random(3, 3, 1.0, 0)
    (g,) = partition_groups(a, (0, 3), 1)
    assert [(nz.k, nz.m) for nz in g] == sorted((k, m) for m in range(3) for k in range(3))


def test_make_schedule_example(example_matrix):
    s = make_schedule(SpmmProblem.from_matrix(example_matrix, 4), TileConfig.for_n(2, 2, 2, 4))
    assert s.config.gsy == 2
    assert s.row_ranges == ((0, 1), (1, 4))
    assert s.per_group_nnz == ((1, 1), (1, 1))
    assert s.k_list(1, 0) == [1] and s.k_list(1, 1) == [3]
    assert list(s.n_list(1)) == [2, 3]


def test_dense_schedule_contiguous_k():
    a = sparse_random(8, 16, 1.0, 1)
    s = make_schedule(SpmmProblem.from_matrix(a, 4), TileConfig.for_n(2, 1, 4, 4))
    for row in range(2):
        for g in range(4):
            ks = s.k_list(row, g)
            assert ks == list(range(ks[0], ks[-1] + 1))
        counts = s.per_group_nnz[row]
        assert max(counts) - min(counts) <= math.ceil(sum(counts) / 4)


def test_empty_rows_schedule():
    a = sparse_from_parts(3, 3, [0, 0, 0, 3], [0, 1, 2], [1, 1, 1])
    s = make_schedule(SpmmProblem.from_matrix(a, 2), TileConfig.for_n(3, 1, 2, 2))
    assert s.row_ranges == ((0, 1), (1, 2), (2, 3))
    assert s.per_group_nnz[:2] == ((0, 0), (0, 0))


def test_config_divisibility():
    with pytest.raises(ConfigError) as exc:
        TileConfig.for_n(1, 3, 1, 4)
    assert exc.value.constraint == "divisibility"


@settings(max_examples=200)
@given(sparse_matrices(max_rows=30, max_cols=20), st.data())
def test_schedule_properties(a, data):
    mb = data.draw(st.integers(1, a.rows))
    gy = data.draw(st.integers(1, 9))
    s = make_schedule(SpmmProblem.from_matrix(a, 1), TileConfig(mb, 1, gy, 1))
    # matches the prefix-sum restatement
    assert list(s.row_ranges) == prefix_partition(a.row_nnz(), mb)
    # contiguous, ordered, nonempty cover of [0, M)
    assert s.row_ranges[0][0] == 0 and s.row_ranges[-1][1] == a.rows
    assert all(e > st_ for st_, e in s.row_ranges)
    assert all(s.row_ranges[i][1] == s.row_ranges[i + 1][0] for i in range(mb - 1))
    # coverage: each nonzero exactly once
    got = Counter((nz.m, nz.k) for row in s.group_slices for g in row for nz in g)
    want = Counter(zip(a.row_indices().tolist(), a.col_idx.tolist()))
    assert got == want and max(got.values(), default=1) == 1
    # balance: every group before the last nonempty one holds exactly ceil(nnz/gy)
    for counts in s.per_group_nnz:
        target = math.ceil(sum(counts) / gy)
        nonempty = [i for i, c in enumerate(counts) if c]
        last = nonempty[-1] if nonempty else -1
        assert all(c == target for c in counts[:last])
        assert all(c <= target for c in counts)
    # determinism
    assert make_schedule(SpmmProblem.from_matrix(a, 1), TileConfig(mb, 1, gy, 1)) == s
