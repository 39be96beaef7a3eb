import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spgen.codegen import (
    BlockRowCode,
    Fma,
    Guard,
    KernelProgram,
    LoadB,
    LoadBVirtual,
    MachineParams,
    classify_guard,
    compile_conv,
    compile_spmm,
    dumps_program,
    loads_program,
    validate_program,
)
from spgen.core import ConvProblem, SpmmProblem, sparse_from_parts, sparse_random
from spgen.formats import FormatError
from spgen.schedule import ConfigError, TileConfig

from conftest import sparse_matrices

M = MachineParams()


def spmm_prog(a, n, mb, nb, gy, machine=M):
    return compile_spmm(SpmmProblem.from_matrix(a, n), TileConfig.for_n(mb, nb, gy, n), machine)


def test_compile_example(example_matrix):
    p = spmm_prog(example_matrix, 4, 2, 2, 2)
    row1 = p.rows[1]
    assert (row1.m_start, row1.slots) == (1, 3)
    (tile,) = row1.tiles
    assert tile[0] == [LoadB(0, 1), Fma(0, 0, np.float32(3.0))]
    assert tile[1] == [LoadB(0, 3), Fma(2, 0, np.float32(4.0))]
    assert p.constant_footprint == 16 and not p.spill
    assert validate_program(p) == []


def test_compile_zero_matrix():
    a = sparse_from_parts(3, 4, [0, 0, 0, 0], [], [])
    p = spmm_prog(a, 2, 2, 1, 2)
    assert all(s == [] for r in p.rows for t in r.tiles for s in t)
    assert p.constant_footprint == 0 and validate_program(p) == []


def test_compile_dense_full_unroll():
    a = sparse_random(4, 4, 1.0, 0)
    (stream,) = spmm_prog(a, 4, 1, 1, 1).rows[0].tiles[0]
    assert len(stream) == 20
    for k in range(4):
        block = stream[5 * k:5 * k + 5]
        assert block[0] == LoadB(0, k)
        assert [i.acc for i in block[1:]] == [0, 1, 2, 3]
    assert sum(isinstance(i, Fma) for i in stream) == 16


def test_shared_memory_rejection():
    # one block row of 128 slots x gsy 128 x 4 bytes = 65536 > 49152
    a = sparse_random(128, 8, 0.5, 0)
    with pytest.raises(ConfigError) as exc:
        spmm_prog(a, 128, 1, 1, 1)
    assert exc.value.constraint == "shared_mem_bytes"
    # two block rows: slots follow the nonzero balance, but fit comfortably
    assert spmm_prog(a, 128, 2, 1, 1).max_slots * 128 * 4 <= 49152


def test_thread_limit_rejection(example_matrix):
    with pytest.raises(ConfigError) as exc:
        spmm_prog(example_matrix, 4, 1, 1, 2, MachineParams(max_threads_per_block=4))
    assert exc.value.constraint == "max_threads_per_block"


def test_classify_guard_examples():
    assert classify_guard(1, 1, range(5, 7), 4, 4) is Guard.ALWAYS
    assert classify_guard(0, 0, range(0, 2), 4, 4) is Guard.NEVER
    assert classify_guard(0, 2, range(0, 2), 4, 4) is Guard.NEVER
    assert classify_guard(1, 0, range(0, 2), 4, 4) is Guard.MIXED


def brute_guard(dy, dx, tile, h, w):
    inside = [0 <= n // w + dy - 1 < h and 0 <= n % w + dx - 1 < w for n in tile]
    return Guard.ALWAYS if all(inside) else Guard.NEVER if not any(inside) else Guard.MIXED


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2), st.integers(0, 2), st.data())
def test_classify_guard_matches_enumeration(h, w, dy, dx, data):
    lo = data.draw(st.integers(0, h * w - 1))
    hi = data.draw(st.integers(lo + 1, h * w))
    assert classify_guard(dy, dx, range(lo, hi), h, w) is brute_guard(dy, dx, range(lo, hi), h, w)


def test_conv_elides_never_taps():
    f = sparse_random(1, 9, 1.0, 0)
    p = compile_conv(ConvProblem(4, 4, 1, 1, f), TileConfig.for_n(1, 8, 1, 16), M)
    tile0 = p.rows[0].tiles[0][0]
    loads = [i for i in tile0 if isinstance(i, LoadBVirtual)]
    assert [(i.dy, i.dx) for i in loads] == [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]
    assert loads[0].guard is Guard.MIXED and loads[1].guard is Guard.ALWAYS
    assert sum(isinstance(i, Fma) for i in tile0) == 6
    assert validate_program(p) == []


def spmm_to_conv_stream(stream, tile, h, w):
    out, keep = [], False
    for ins in stream:
        if isinstance(ins, LoadB):
            c, dy, dx = ins.k // 9, (ins.k % 9) // 3, ins.k % 3
            g = brute_guard(dy, dx, tile, h, w)
            keep = g is not Guard.NEVER
            if keep:
                out.append(LoadBVirtual(0, c, dy, dx, g))
        elif keep:
            out.append(ins)
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.integers(1, 3),
       st.sampled_from([0.1, 0.5, 1.0]), st.integers(0, 999), st.data())
def test_conv_spmm_coherence(h, w, cin, cout, dens, seed, data):
    f = sparse_random(cout, cin * 9, dens, seed)
    prob = ConvProblem(h, w, cin, cout, f)
    n = h * w
    nb = data.draw(st.sampled_from([d for d in range(1, n + 1) if n % d == 0]))
    cfg = TileConfig.for_n(data.draw(st.integers(1, cout)), nb, data.draw(st.integers(1, 4)), n)
    conv = compile_conv(prob, cfg, M)
    spmm = compile_spmm(prob.as_spmm(), cfg, M)
    for crow, srow in zip(conv.rows, spmm.rows):
        assert (crow.m_start, crow.slots) == (srow.m_start, srow.slots)
        for j in range(nb):
            tile = range(j * cfg.gsy, (j + 1) * cfg.gsy)
            want = [spmm_to_conv_stream(s, tile, h, w) for s in srow.tiles[0]]
            assert crow.tiles[j] == want
    assert spmm.fma_count() == f.nnz
    assert conv.fma_count() <= f.nnz * nb
    assert validate_program(conv) == []


def test_footprint_and_spill():
    a = sparse_random(64, 64, 0.5, 0)
    p = spmm_prog(a, 8, 2, 1, 2, MachineParams(constant_cache_bytes=1024))
    assert p.constant_footprint == 4 * a.nnz and p.spill
    assert not spmm_prog(a, 8, 2, 1, 2).spill


def test_validate_flags_undefined_register(example_matrix):
    p = spmm_prog(example_matrix, 4, 2, 2, 2)
    p.rows[1].tiles[0][0].insert(0, Fma(0, 0, np.float32(1.0)))
    p.constant_footprint += 4
    diags = validate_program(p)
    assert len(diags) == 1
    assert "row 1 tile 0 group 0 instr 0" in str(diags[0]) and "undefined register" in str(diags[0])


def test_validate_flags_slot_and_footprint(example_matrix):
    p = spmm_prog(example_matrix, 4, 2, 2, 2)
    p.rows[0].tiles[0][0].append(Fma(5, 0, np.float32(1.0)))
    msgs = " | ".join(map(str, validate_program(p)))
    assert "accumulator a5" in msgs and "constant_footprint" in msgs


def test_validate_hand_built_bad_program():
    prog = KernelProgram(
        "spmm", {"m": 1, "k": 1, "n": 1}, TileConfig(1, 1, 1, 1), M,
        [BlockRowCode(0, 1, [[[Fma(0, 1, np.float32(2.0))]]])], constant_footprint=4,
    )
    (d,) = validate_program(prog)
    assert "r1" in d.message


@settings(max_examples=40, deadline=None)
@given(sparse_matrices(max_rows=10, max_cols=10), st.data())
def test_program_round_trip(a, data):
    n = data.draw(st.sampled_from([1, 2, 4, 6]))
    nb = data.draw(st.sampled_from([d for d in (1, 2, 3, 6) if n % d == 0]))
    p = spmm_prog(a, n, data.draw(st.integers(1, a.rows)), nb, data.draw(st.integers(1, 3)))
    text = dumps_program(p)
    q = loads_program(text)
    assert q == p and dumps_program(q) == text


def test_conv_program_round_trip():
    f = sparse_random(4, 18, 0.4, 3, signed=True)
    p = compile_conv(ConvProblem(5, 4, 2, 4, f), TileConfig.for_n(2, 5, 2, 20), M)
    text = dumps_program(p)
    assert "guard=M" in text and "tile 4" in text
    assert loads_program(text) == p


def test_compile_is_deterministic():
    a = sparse_random(16, 16, 0.3, 9)
    assert dumps_program(spmm_prog(a, 8, 4, 2, 3)) == dumps_program(spmm_prog(a, 8, 4, 2, 3))


def test_loads_program_rejects_garbage():
    with pytest.raises(FormatError):
        loads_program("kernel spmm\ndims m=1 k=1 n=1\n")
    with pytest.raises(FormatError):
        loads_program("hello\n")
