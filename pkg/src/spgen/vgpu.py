"""Deterministic SIMT interpreter for kernel programs, plus the ordinal cost model.

Blocks run in grid row-major order, groups in ascending index, and
instructions in program order. Lanes are vectorized with numpy; every
lane's arithmetic is float32 and independent of its neighbours, so
vectorizing across lanes (and, for shared SpMM streams, across all grid
columns of a block row at once) gives bit-identical results to a scalar
lane loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codegen import (
    Fma,
    Guard,
    KernelProgram,
    LoadBVirtual,
    MachineParams,
    validate_program,
)
from .core import DenseMatrix, Tensor3


class ExecutionError(ValueError):
    pass


@dataclass(frozen=True)
class GroupCounts:
    loads: int
    fmas: int
    mixed: int

    @property
    def instructions(self) -> int:
        return self.loads + self.fmas


@dataclass(frozen=True)
class StaticMetrics:
    """Instruction counts per block, read straight off a program (no execution)."""

    gsy: int
    gy: int
    n_blocks: int
    spill: bool
    constant_footprint: int
    # one entry per block, grid row-major: (slots, per-group counts)
    blocks: tuple[tuple[int, tuple[GroupCounts, ...]], ...]

    @classmethod
    def of(cls, p: KernelProgram) -> StaticMetrics:
        cache: dict[int, tuple[GroupCounts, ...]] = {}
        blocks = []
        for _, _, row, tile in p.blocks():
            key = id(tile)
            if key not in cache:
                cache[key] = tuple(_count(stream) for stream in tile)
            blocks.append((row.slots, cache[key]))
        return cls(p.gsy, p.gy, p.n_blocks, p.spill, p.constant_footprint, tuple(blocks))

    def groups(self):
        for _, gs in self.blocks:
            yield from gs

    @property
    def lane_fma(self) -> int:
        return sum(g.fmas for g in self.groups()) * self.gsy

    @property
    def b_loads(self) -> int:
        return sum(g.loads for g in self.groups()) * self.gsy

    @property
    def guarded_loads(self) -> int:
        return sum(g.mixed for g in self.groups()) * self.gsy


def _count(stream) -> GroupCounts:
    loads = fmas = mixed = 0
    for ins in stream:
        if isinstance(ins, Fma):
            fmas += 1
        else:
            loads += 1
            if isinstance(ins, LoadBVirtual) and ins.guard is Guard.MIXED:
                mixed += 1
    return GroupCounts(loads, fmas, mixed)


@dataclass
class ExecutionReport:
    output: DenseMatrix | Tensor3
    static: StaticMetrics
    lane_fma: int
    b_loads: int
    guarded_loads: int
    per_group_instructions: tuple[int, ...]
    max_acc_slots: int
    wasted_registers: int
    constant_footprint: int
    spill: bool
    group_imbalance: float
    extra: dict = field(default_factory=dict)

    METRIC_KEYS = (
        "lane_fma", "b_loads", "guarded_loads", "max_acc_slots", "wasted_registers",
        "constant_footprint", "spill", "group_imbalance",
    )

    def metrics(self) -> dict:
        d = {key: getattr(self, key) for key in self.METRIC_KEYS}
        d["spill"] = int(d["spill"])
        d.update(self.extra)
        return d

    def dumps(self) -> str:
        lines = [f"{key}={_fmt(v)}" for key, v in self.metrics().items()]
        lines.append("per_group_instructions=" + ",".join(map(str, self.per_group_instructions)))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def loads_report_metrics(text: str) -> dict:
    """Parse the key=value dump written by :meth:`ExecutionReport.dumps`."""
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, val = line.split("=", 1)
        if key == "per_group_instructions":
            out[key] = tuple(int(t) for t in val.split(",") if t)
        elif "." in val or "e" in val or val in ("inf", "nan"):
            out[key] = float(val)
        else:
            out[key] = int(val)
    return out


def summarize(p: KernelProgram, static: StaticMetrics | None = None) -> dict:
    """Metrics that depend only on the program text."""
    static = static or StaticMetrics.of(p)
    # per stored stream: SpMM rows share one stream across grid columns
    stored = [_count(s) for r in p.rows for t in r.tiles for s in t]
    per_group = tuple(g.instructions for g in stored)
    fmas = [g.fmas for g in stored if g.fmas]
    imbalance = max(fmas) / (sum(fmas) / len(fmas)) if fmas else 0.0
    max_slots = p.max_slots
    return dict(
        lane_fma=static.lane_fma,
        b_loads=static.b_loads,
        guarded_loads=static.guarded_loads,
        per_group_instructions=per_group,
        max_acc_slots=max_slots,
        wasted_registers=sum((max_slots - r.slots) * p.gsy for r in p.rows),
        constant_footprint=p.constant_footprint,
        spill=p.spill,
        group_imbalance=imbalance,
    )


def _check_input(p: KernelProgram, b):
    m, k, n = p.mkn
    if p.kind == "spmm":
        if not isinstance(b, DenseMatrix) or b.shape != (k, n):
            raise ExecutionError(f"B must be a {k}x{n} DenseMatrix, got {getattr(b, 'shape', type(b))}")
    else:
        want = (p.dims["cin"], p.dims["h"], p.dims["w"])
        if not isinstance(b, Tensor3) or b.shape != want:
            raise ExecutionError(f"input must be a Tensor3 of shape {want}, got {getattr(b, 'shape', type(b))}")


def execute(p: KernelProgram, b: DenseMatrix | Tensor3, machine: MachineParams | None = None) -> ExecutionReport:
    machine = machine or p.machine
    diags = validate_program(p, machine)
    if diags:
        raise ExecutionError("invalid program:\n  " + "\n  ".join(map(str, diags)))
    _check_input(p, b)
    m, _, n = p.mkn
    c = np.zeros((m, n), dtype=np.float32)
    if p.kind == "spmm":
        _run_spmm(p, b.data, c)
    else:
        _run_conv(p, b, c)
    out = DenseMatrix(c) if p.kind == "spmm" else Tensor3(c.reshape(p.dims["cout"], p.dims["h"], p.dims["w"]))
    static = StaticMetrics.of(p)
    return ExecutionReport(output=out, static=static, **summarize(p, static))


def _run_stream(stream, acc, fetch):
    breg = None
    for ins in stream:
        if type(ins) is Fma:
            acc[ins.acc] += ins.value * breg
        else:
            breg = fetch(ins)


def _run_block(row, tile, fetch, width, c, cols):
    # group accumulators are reduced in ascending group order, then added to C
    tile_acc = None
    for stream in tile:
        acc = np.zeros((row.slots, width), dtype=np.float32)
        _run_stream(stream, acc, fetch)
        if tile_acc is None:
            tile_acc = acc
        else:
            tile_acc += acc
    c[row.m_start:row.m_start + row.slots, cols] += tile_acc


def _run_spmm(p: KernelProgram, b: np.ndarray, c: np.ndarray):
    # One SpMM stream serves every grid column, so all columns of a block row
    # execute together: lane vector = the full N extent.
    n = b.shape[1]

    def fetch(ins):
        return b[ins.k]

    for row in p.rows:
        _run_block(row, row.tiles[0], fetch, n, c, slice(0, n))


def _run_conv(p: KernelProgram, x: Tensor3, c: np.ndarray):
    h, w = p.dims["h"], p.dims["w"]
    data = x.data
    gsy = p.gsy
    for row in p.rows:
        for j in range(p.n_blocks):
            lanes = np.arange(j * gsy, (j + 1) * gsy)
            ys, xs = np.divmod(lanes, w)

            def fetch(ins, ys=ys, xs=xs):
                sy = ys + (ins.dy - 1)
                sx = xs + (ins.dx - 1)
                if ins.guard is Guard.ALWAYS:
                    return data[ins.c_in, sy, sx]
                ok = (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w)
                vals = np.zeros(gsy, dtype=np.float32)
                vals[ok] = data[ins.c_in, sy[ok], sx[ok]]
                return vals

            _run_block(row, row.tile_for(j), fetch, gsy, c, slice(j * gsy, (j + 1) * gsy))


def estimate_cost(source, machine: MachineParams | None = None) -> float:
    """Ordinal kernel cost from static instruction counts.

    ``source`` may be a KernelProgram, an ExecutionReport or StaticMetrics.
    group cost = c_load*loads + c_fma*fmas + c_guard*mixed-guard loads
    (instruction counts, i.e. lane counts divided by gsy); block cost = worst
    group + c_reduce*gy*slots; kernel cost sums the worst block of each wave
    of ``sm_count`` blocks taken in grid row-major order. When the baked
    constants overflow the constant cache, c_fma is scaled by spill_penalty.
    """
    if isinstance(source, KernelProgram):
        machine = machine or source.machine
        static = StaticMetrics.of(source)
    elif isinstance(source, ExecutionReport):
        static = source.static
    else:
        static = source
    if machine is None:
        raise ValueError("machine params required")
    c_fma = machine.c_fma * (machine.spill_penalty if static.spill else 1.0)
    block_costs = []
    for slots, groups in static.blocks:
        worst = max(
            (machine.c_load * g.loads + c_fma * g.fmas + machine.c_guard * g.mixed for g in groups),
            default=0.0,
        )
        reduce = machine.c_reduce * static.gy * slots if any(g.instructions for g in groups) else 0.0
        block_costs.append(worst + reduce)
    wave = machine.sm_count
    return float(sum(max(block_costs[i:i + wave]) for i in range(0, len(block_costs), wave)))
