import pytest
from hypothesis import given, strategies as st

from spgen.codegen import MachineParams
from spgen.core import ConvProblem, SpmmProblem, sparse_from_parts, sparse_random
from spgen.schedule import TileConfig
from spgen.tuner import (
    Evaluation,
    NoFeasibleConfig,
    SearchSpace,
    TuneResult,
    divisors,
    enumerate_configs,
    thin,
    tune,
)

TINY = SearchSpace(min_gsy=1)


def test_divisors():
    assert divisors(1) == [1]
    assert divisors(36) == [1, 2, 3, 4, 6, 9, 12, 18, 36]
    assert divisors(3136)[-1] == 3136


@given(st.lists(st.integers(), min_size=1, max_size=40, unique=True).map(sorted), st.integers(1, 8))
def test_thin_keeps_ends_and_order(values, limit):
    out = thin(values, limit)
    assert len(out) == min(len(values), limit)
    assert out == sorted(out) and set(out) <= set(values)
    assert out[0] == values[0]
    if limit > 1:
        assert out[-1] == values[-1]


def test_tiny_problem_grid():
    cfgs = enumerate_configs(4, 4, 4, MachineParams(), TINY)
    assert TileConfig(1, 1, 1, 4) in cfgs
    assert {c.m_blocks for c in cfgs} == {1, 2, 4}
    assert {c.n_blocks for c in cfgs} == {1, 2, 4}
    assert {c.gy for c in cfgs} == {1, 2, 4, 8, 16, 32}
    assert cfgs == sorted(cfgs, key=lambda c: c.key)
    # the default lane floor of 8 rules out every split of N=4
    with pytest.raises(NoFeasibleConfig, match="gsy range"):
        enumerate_configs(4, 4, 4)


def test_single_thread_machine():
    cfgs = enumerate_configs(4, 4, 4, MachineParams(max_threads_per_block=1), TINY)
    assert cfgs and all(c.gy == 1 and c.gsy == 1 for c in cfgs)


def test_shared_memory_names_constraint():
    with pytest.raises(NoFeasibleConfig) as exc:
        enumerate_configs(64, 64, 64, MachineParams(shared_mem_bytes=4), SearchSpace(min_gsy=1))
    assert exc.value.constraint == "shared_mem_bytes"


def test_table1_problem1_grid_size():
    cfgs = enumerate_configs(64, 256, 3136)
    assert 0 < len(cfgs) <= 100
    assert all(8 <= c.gsy <= 256 and 3136 % c.n_blocks == 0 and 64 % c.m_blocks == 0 for c in cfgs)


def test_tune_tiny_is_deterministic(example_matrix):
    prob = SpmmProblem.from_matrix(example_matrix, 4)
    r1 = tune(prob, space=TINY)
    r2 = tune(prob, space=TINY)
    assert r1.dumps() == r2.dumps()
    assert len(r1.evaluated) == len(enumerate_configs(4, 4, 4, MachineParams(), TINY))
    best = min(e.cost for e in r1.evaluated)
    winners = [e.config for e in r1.evaluated if e.cost == best]
    assert r1.chosen == min(winners, key=lambda c: c.key)


def test_modes_agree(example_matrix):
    prob = SpmmProblem.from_matrix(example_matrix, 4)
    est = tune(prob, space=TINY, mode="estimate")
    sim = tune(prob, space=TINY, mode="simulate")
    assert est.chosen == sim.chosen
    assert [e.cost for e in est.evaluated] == [e.cost for e in sim.evaluated]


def test_tie_rule():
    # with every weight zero all costs tie, so the smallest key wins
    flat = MachineParams(c_load=0, c_fma=0, c_guard=0, c_reduce=0)
    res = tune(SpmmProblem.from_matrix(sparse_random(8, 8, 0.5, 0), 8), flat, space=TINY)
    assert {e.cost for e in res.evaluated} == {0.0}
    assert res.chosen == TileConfig(1, 1, 1, 8)


def test_compile_failures_are_recorded():
    # all nonzeros in row 0: the nonzero-balanced partition hands the other
    # 63 rows to one block, overflowing the (ceil(M/mb)+1)-slot estimate
    a = sparse_from_parts(64, 4, [0, 4] + [4] * 63, [0, 1, 2, 3], [1.0] * 4)
    prob = SpmmProblem.from_matrix(a, 256)
    res = tune(prob, space=SearchSpace(min_gsy=256, gy_choices=(1,)))
    failed = [e.config.m_blocks for e in res.evaluated if not e.ok]
    assert failed == [4, 16]  # m choices thinned to 1, 4, 16, 64
    assert all(e.error == "shared_mem_bytes" for e in res.evaluated if not e.ok)
    assert res.chosen is not None and res.chosen.m_blocks not in failed


def test_result_round_trip():
    prob = SpmmProblem.from_matrix(sparse_random(16, 32, 0.2, 1), 32)
    res = tune(prob, space=TINY, seed=3)
    res.evaluated.append(Evaluation(TileConfig(3, 1, 1, 32), None, error="divisibility"))
    text = res.dumps()
    back = TuneResult.loads(text)
    assert back.dumps() == text
    assert back.chosen == res.chosen and back.machine == res.machine
    assert text.rstrip().splitlines()[-1].startswith("chosen: ")


def test_conv_tune_verifies():
    f = sparse_random(8, 4 * 9, 0.3, 0, signed=True)
    res = tune(ConvProblem(4, 4, 4, 8, f), verify=True, space=SearchSpace(min_gsy=2))
    assert res.kind == "conv" and res.dims == {"h": 4, "w": 4, "cin": 4, "cout": 8}
    assert all(e.ok for e in res.evaluated)


def test_unknown_mode(example_matrix):
    with pytest.raises(ValueError):
        tune(SpmmProblem.from_matrix(example_matrix, 4), mode="fast", space=TINY)
