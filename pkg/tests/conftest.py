import numpy as np
import pytest
from hypothesis import strategies as st

from spgen.core import sparse_from_parts, sparse_random

ACCEPTANCE_RESULTS = []


@pytest.fixture
def example_matrix():
    # row nnz = [2, 1, 0, 1]
    return sparse_from_parts(4, 4, [0, 2, 3, 3, 4], [0, 2, 1, 3], [2, 1, 3, 4])


@pytest.fixture
def record():
    def _record(criterion, passed, detail=""):
        ACCEPTANCE_RESULTS.append((criterion, passed, detail))
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


@st.composite
def sparse_matrices(draw, max_rows=12, max_cols=12, signed=True):
    rows = draw(st.integers(1, max_rows))
    cols = draw(st.integers(1, max_cols))
    dens = draw(st.sampled_from([0.05, 0.1, 0.25, 0.5, 1.0]))
    seed = draw(st.integers(0, 2**31 - 1))
    return sparse_random(rows, cols, dens, seed, signed=signed)


def rng_dense(shape, seed):
    return np.random.default_rng(seed).random(shape, dtype=np.float32)
