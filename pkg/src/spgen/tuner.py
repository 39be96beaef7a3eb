"""Exhaustive grid search over tiling parameters.

Candidates come from divisors of M (block-grid rows) and N (block-grid
columns, constrained through the lane count gsy = N / n_blocks) crossed
with a fixed list of group counts, then filtered by thread-count and
shared-memory feasibility. Each axis is thinned to a short, evenly spread
list before crossing, which keeps the search to at most
``max_m_choices * max_n_choices * len(gy_choices)`` configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codegen import F32_BYTES, KernelProgram, MachineParams, compile_conv, compile_spmm
from .core import ConvProblem, DenseMatrix, SpmmProblem, Tensor3
from .formats import FormatError
from .oracle import conv_direct, gemm_dense, relative_error, to_dense
from .schedule import ConfigError, TileConfig
from .vgpu import StaticMetrics, estimate_cost, execute, summarize

SPMM_TOL = 1e-5
CONV_TOL = 1e-4


class NoFeasibleConfig(ValueError):
    def __init__(self, constraint: str, detail: str):
        super().__init__(f"no feasible configuration ({constraint}): {detail}")
        self.constraint = constraint


class VerificationError(AssertionError):
    def __init__(self, config: TileConfig, error: float, tol: float):
        super().__init__(f"config {config} fails oracle check: rel error {error:.3g} > {tol:g}")
        self.config = config
        self.error = error


@dataclass(frozen=True)
class SearchSpace:
    min_gsy: int = 8
    max_gsy: int = 256
    gy_choices: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    max_m_choices: int = 4
    max_n_choices: int = 4


def divisors(x: int) -> list[int]:
    small = [d for d in range(1, math.isqrt(x) + 1) if x % d == 0]
    return sorted(set(small + [x // d for d in small]))


def thin(values: list[int], limit: int) -> list[int]:
    """Keep at most ``limit`` values, evenly spaced by rank, always keeping both ends."""
    if len(values) <= limit:
        return list(values)
    if limit == 1:
        return [values[0]]
    picks = sorted({round(i * (len(values) - 1) / (limit - 1)) for i in range(limit)})
    return [values[i] for i in picks]


def enumerate_configs(m: int, k: int, n: int, machine: MachineParams = MachineParams(),
                      space: SearchSpace = SearchSpace()) -> list[TileConfig]:
    """Feasible tiling configurations in lexicographic (m_blocks, n_blocks, gy) order."""
    if min(m, k, n) < 1:
        raise ValueError(f"dims must be positive, got {(m, k, n)}")
    m_choices = thin(divisors(m), space.max_m_choices)
    n_all = [nb for nb in divisors(n) if space.min_gsy <= n // nb <= space.max_gsy]
    if not n_all:
        raise NoFeasibleConfig("gsy range", f"no divisor of N={n} gives gsy in [{space.min_gsy}, {space.max_gsy}]")
    # thin by lane count so the spread is over gsy, then restore n_blocks order
    n_choices = sorted(n // g for g in thin(sorted(n // nb for nb in n_all), space.max_n_choices))
    out = []
    blocked = "max_threads_per_block"
    for mb in m_choices:
        slots_bound = math.ceil(m / mb) + 1
        for nb in n_choices:
            gsy = n // nb
            if slots_bound * gsy * F32_BYTES > machine.shared_mem_bytes:
                blocked = "shared_mem_bytes"
                continue
            for gy in space.gy_choices:
                if gy * gsy > machine.max_threads_per_block:
                    continue
                out.append(TileConfig(mb, nb, gy, gsy))
    if not out:
        raise NoFeasibleConfig(blocked, f"every candidate for M={m}, N={n} violates it")
    return sorted(out, key=lambda c: c.key)


@dataclass
class Evaluation:
    config: TileConfig
    cost: float | None
    spill: bool = False
    fma: int = 0
    loads: int = 0
    imbalance: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class TuneResult:
    kind: str
    dims: dict
    mode: str
    seed: int
    machine: MachineParams
    evaluated: list[Evaluation] = field(default_factory=list)
    chosen: TileConfig | None = None

    def dumps(self) -> str:
        dims = " ".join(f"{key}={v}" for key, v in self.dims.items())
        machine = " ".join(f"{key}={v!r}" if isinstance(v, float) else f"{key}={v}"
                           for key, v in self.machine.as_dict().items())
        lines = [
            f"tune {self.kind} {dims} mode={self.mode} seed={self.seed}",
            f"machine {machine}",
            "# m_blocks n_blocks gy gsy cost spill fma loads imbalance status",
        ]
        for e in self.evaluated:
            c = e.config
            head = f"config {c.m_blocks} {c.n_blocks} {c.gy} {c.gsy}"
            if e.ok:
                lines.append(f"{head} {e.cost!r} {int(e.spill)} {e.fma} {e.loads} {e.imbalance!r} ok")
            else:
                lines.append(f"{head} - - - - - failed {e.error}")
        c = self.chosen
        lines.append(f"chosen: {c.m_blocks} {c.n_blocks} {c.gy} {c.gsy}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> TuneResult:
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        try:
            head = lines[0].split()
            kind = head[1]
            kv = dict(t.split("=", 1) for t in head[2:])
            mode, seed = kv.pop("mode"), int(kv.pop("seed"))
            dims = {key: int(v) for key, v in kv.items()}
            machine = MachineParams.from_dict(dict(t.split("=", 1) for t in lines[1].split()[1:]))
            res = cls(kind, dims, mode, seed, machine)
            for ln in lines[2:]:
                tok = ln.split()
                if tok[0] == "config":
                    cfg = TileConfig(*(int(t) for t in tok[1:5]))
                    if tok[10] == "ok":
                        res.evaluated.append(Evaluation(
                            cfg, float(tok[5]), bool(int(tok[6])), int(tok[7]), int(tok[8]), float(tok[9])
                        ))
                    else:
                        res.evaluated.append(Evaluation(cfg, None, error=ln.split(" failed ", 1)[1]))
                elif tok[0] == "chosen:":
                    res.chosen = TileConfig(*(int(t) for t in tok[1:5]))
        except (IndexError, KeyError, ValueError) as exc:
            raise FormatError(f"malformed tune result: {exc}") from exc
        return res


def _compile(problem, config, machine) -> KernelProgram:
    if isinstance(problem, ConvProblem):
        return compile_conv(problem, config, machine)
    return compile_spmm(problem, config, machine)


def default_input(problem, seed: int):
    """Seeded nonnegative B (SpMM) or input activations (conv) in [0, 1)."""
    rng = np.random.default_rng(seed)
    if isinstance(problem, ConvProblem):
        return Tensor3(rng.random((problem.c_in, problem.height, problem.width), dtype=np.float32))
    return DenseMatrix(rng.random((problem.k, problem.n), dtype=np.float32))


def reference(problem, b):
    """Oracle output and the magnitude scale used for relative error."""
    a_dense = to_dense(problem.filter if isinstance(problem, ConvProblem) else problem.a)
    abs_a = type(a_dense)(np.abs(a_dense.data))
    if isinstance(problem, ConvProblem):
        ref = conv_direct(b, a_dense)
        mag = conv_direct(type(b)(np.abs(b.data)), abs_a)
    else:
        ref = gemm_dense(a_dense, b)
        mag = gemm_dense(abs_a, type(b)(np.abs(b.data)))
    return ref, mag


def tune(problem: SpmmProblem | ConvProblem, machine: MachineParams = MachineParams(),
         mode: str = "estimate", verify: bool = False, seed: int = 0, b=None,
         space: SearchSpace = SearchSpace()) -> TuneResult:
    """Compile every candidate, score it, and pick the cheapest.

    ``simulate`` mode executes each candidate on ``b`` (or a seeded input)
    and always checks it against the oracle; ``verify`` adds the same check
    to ``estimate`` mode. Both modes score with the same static cost, so
    they agree on the chosen configuration.
    """
    if mode not in ("estimate", "simulate"):
        raise ValueError(f"unknown mode {mode!r}")
    m, k, n = problem.dims
    configs = enumerate_configs(m, k, n, machine, space)
    is_conv = isinstance(problem, ConvProblem)
    dims = (
        {"h": problem.height, "w": problem.width, "cin": problem.c_in, "cout": problem.c_out}
        if is_conv else {"m": m, "k": k, "n": n}
    )
    result = TuneResult("conv" if is_conv else "spmm", dims, mode, seed, machine)
    run = mode == "simulate" or verify
    if run:
        b = b if b is not None else default_input(problem, seed)
        ref, mag = reference(problem, b)
        tol = CONV_TOL if is_conv else SPMM_TOL
    for cfg in configs:
        try:
            prog = _compile(problem, cfg, machine)
        except ConfigError as exc:
            result.evaluated.append(Evaluation(cfg, None, error=exc.constraint))
            continue
        static = StaticMetrics.of(prog)
        summary = summarize(prog, static)
        if run:
            report = execute(prog, b, machine)
            err = relative_error(report.output, ref, mag)
            if not err <= tol:
                raise VerificationError(cfg, err, tol)
        result.evaluated.append(Evaluation(
            cfg, estimate_cost(static, machine), prog.spill,
            summary["lane_fma"], summary["b_loads"], summary["group_imbalance"],
        ))
    ok = [e for e in result.evaluated if e.ok]
    if not ok:
        raise NoFeasibleConfig("compile", "every candidate failed to compile")
    result.chosen = min(ok, key=lambda e: (e.cost, e.config.key)).config
    return result
