"""Executor-phase code generation.

Each thread group's work is fully unrolled: for every reduction index in
its slice the group loads one row of B into its single B register and then
issues one FMA per nonzero, with the nonzero's value baked in as an
immediate. Convolutions read B virtually from the input activations; taps
whose source pixels are provably all padding are removed at compile time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .core import ConvProblem, SpmmProblem, decode_tap
from .formats import FormatError, fmt_f32
from .schedule import BlockSchedule, ConfigError, TileConfig, make_schedule

F32_BYTES = 4


class Guard(enum.Enum):
    ALWAYS = "A"
    MIXED = "M"
    NEVER = "N"


class LoadB(NamedTuple):
    breg: int
    k: int


class LoadBVirtual(NamedTuple):
    breg: int
    c_in: int
    dy: int
    dx: int
    guard: Guard


class Fma(NamedTuple):
    acc: int
    breg: int
    value: np.float32


Instruction = Union[LoadB, LoadBVirtual, Fma]


@dataclass(frozen=True)
class MachineParams:
    """Resource limits and cost weights of the modeled GPU.

    Defaults sketch a Turing-class part (40 SMs, 1024 threads/block, 48 KiB
    shared memory per block, 64 KiB constant cache). The cost weights are
    unitless and only meaningful relative to each other.
    """

    sm_count: int = 40
    max_threads_per_block: int = 1024
    shared_mem_bytes: int = 49152
    constant_cache_bytes: int = 65536
    c_load: float = 4.0
    c_fma: float = 1.0
    c_guard: float = 1.0
    c_reduce: float = 1.0
    spill_penalty: float = 2.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            # cost weights may be zero to switch a term off
            ok = value >= 0 if name.startswith("c_") else value > 0
            if not ok:
                raise ValueError(f"MachineParams.{name} out of range: {value}")
        if self.spill_penalty < 1:
            raise ValueError("spill_penalty must be >= 1")

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> MachineParams:
        kw = {}
        for name, f in cls.__dataclass_fields__.items():
            if name in d:
                kw[name] = int(d[name]) if f.type == "int" else float(d[name])
        return cls(**kw)


@dataclass
class BlockRowCode:
    """Code for one block-grid row.

    ``tiles`` holds one list of per-group instruction streams per grid
    column. SpMM programs store a single tile shared by every column;
    convolution programs store one per column because padding elision
    depends on which pixels the column covers.
    """

    m_start: int
    slots: int
    tiles: list[list[list[Instruction]]]

    def tile_for(self, col: int) -> list[list[Instruction]]:
        return self.tiles[0] if len(self.tiles) == 1 else self.tiles[col]


@dataclass
class KernelProgram:
    kind: str  # "spmm" | "conv"
    dims: dict
    config: TileConfig
    machine: MachineParams
    rows: list[BlockRowCode]
    constant_footprint: int = 0
    epilogue: str = "reduce-ascending add"

    @property
    def m_blocks(self) -> int:
        return self.config.m_blocks

    @property
    def n_blocks(self) -> int:
        return self.config.n_blocks

    @property
    def gy(self) -> int:
        return self.config.gy

    @property
    def gsy(self) -> int:
        return self.config.gsy

    @property
    def mkn(self) -> tuple[int, int, int]:
        d = self.dims
        if self.kind == "spmm":
            return d["m"], d["k"], d["n"]
        return d["cout"], d["cin"] * 9, d["h"] * d["w"]

    @property
    def spill(self) -> bool:
        return self.constant_footprint > self.machine.constant_cache_bytes

    @property
    def max_slots(self) -> int:
        return max((r.slots for r in self.rows), default=0)

    def fma_count(self) -> int:
        """Baked FMA instructions across all stored streams."""
        return sum(
            isinstance(ins, Fma)
            for r in self.rows for t in r.tiles for g in t for ins in g
        )

    def blocks(self):
        """Yield ``(row_index, col_index, row_code, group_streams)`` in grid row-major order."""
        for i, r in enumerate(self.rows):
            for j in range(self.n_blocks):
                yield i, j, r, r.tile_for(j)


def check_resources(config: TileConfig, max_slots: int, machine: MachineParams) -> None:
    if config.threads > machine.max_threads_per_block:
        raise ConfigError(
            "max_threads_per_block",
            f"gy*gsy = {config.threads} > {machine.max_threads_per_block}",
        )
    need = max_slots * config.gsy * F32_BYTES
    if need > machine.shared_mem_bytes:
        raise ConfigError(
            "shared_mem_bytes",
            f"reduction buffer max_slots*gsy*4 = {need} > {machine.shared_mem_bytes}",
        )


def _emit_group(nonzeros, m_start: int, load_for) -> list[Instruction]:
    out: list[Instruction] = []
    i = 0
    while i < len(nonzeros):
        k = nonzeros[i].k
        j = i
        while j < len(nonzeros) and nonzeros[j].k == k:
            j += 1
        load = load_for(k)
        if load is not None:
            out.append(load)
            out.extend(Fma(nz.m - m_start, 0, nz.value) for nz in nonzeros[i:j])
        i = j
    return out


def _schedule_for(problem: SpmmProblem, config: TileConfig, machine: MachineParams) -> BlockSchedule:
    config.check(problem.m, problem.n, machine.max_threads_per_block)
    sched = make_schedule(problem, config)
    check_resources(config, max(e - s for s, e in sched.row_ranges), machine)
    return sched


def compile_spmm(problem: SpmmProblem, config: TileConfig, machine: MachineParams = MachineParams()) -> KernelProgram:
    sched = _schedule_for(problem, config, machine)
    rows = []
    for (s, e), groups in zip(sched.row_ranges, sched.group_slices):
        streams = [_emit_group(g, s, lambda k: LoadB(0, k)) for g in groups]
        rows.append(BlockRowCode(s, e - s, [streams]))
    prog = KernelProgram(
        "spmm", {"m": problem.m, "k": problem.k, "n": problem.n}, config, machine, rows
    )
    prog.constant_footprint = F32_BYTES * prog.fma_count()
    return prog


def classify_guard(dy: int, dx: int, n_tile: range, height: int, width: int) -> Guard:
    """Whether the tap (dy, dx) reads inside the image for all, none or some pixels of a tile."""
    inside = 0
    for n in n_tile:
        y, x = divmod(n, width)
        sy, sx = y + dy - 1, x + dx - 1
        inside += 0 <= sy < height and 0 <= sx < width
    if inside == len(n_tile):
        return Guard.ALWAYS
    if inside == 0:
        return Guard.NEVER
    return Guard.MIXED


def compile_conv(problem: ConvProblem, config: TileConfig, machine: MachineParams = MachineParams()) -> KernelProgram:
    spmm = problem.as_spmm()
    sched = _schedule_for(spmm, config, machine)
    h, w = problem.height, problem.width
    guards = []
    for j in range(config.n_blocks):
        tile = sched.n_list(j)
        guards.append({(dy, dx): classify_guard(dy, dx, tile, h, w) for dy in range(3) for dx in range(3)})

    def loader(col):
        def load_for(k):
            c, dy, dx = decode_tap(k)
            g = guards[col][dy, dx]
            return None if g is Guard.NEVER else LoadBVirtual(0, c, dy, dx, g)
        return load_for

    rows = []
    for (s, e), groups in zip(sched.row_ranges, sched.group_slices):
        tiles = [[_emit_group(g, s, loader(j)) for g in groups] for j in range(config.n_blocks)]
        rows.append(BlockRowCode(s, e - s, tiles))
    dims = {"h": h, "w": w, "cin": problem.c_in, "cout": problem.c_out}
    prog = KernelProgram("conv", dims, config, machine, rows)
    prog.constant_footprint = F32_BYTES * prog.fma_count()
    return prog


@dataclass(frozen=True)
class Diagnostic:
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message}"


def validate_program(p: KernelProgram, machine: MachineParams | None = None) -> list[Diagnostic]:
    """Check structural and resource invariants; an empty list means the program is valid."""
    machine = machine or p.machine
    diags: list[Diagnostic] = []
    m, k, n = p.mkn
    cfg = p.config
    if p.kind not in ("spmm", "conv"):
        diags.append(Diagnostic("program", f"unknown kind {p.kind!r}"))
    if cfg.n_blocks < 1 or n % cfg.n_blocks or cfg.gsy * cfg.n_blocks != n:
        diags.append(Diagnostic("program", f"grid columns {cfg.n_blocks} x gsy {cfg.gsy} != N {n}"))
    if len(p.rows) != cfg.m_blocks:
        diags.append(Diagnostic("program", f"{len(p.rows)} block rows stored, grid has {cfg.m_blocks}"))
    try:
        check_resources(cfg, p.max_slots, machine)
    except ConfigError as exc:
        diags.append(Diagnostic("program", str(exc)))

    expected_start = 0
    for i, row in enumerate(p.rows):
        if row.m_start != expected_start or row.slots < 1:
            diags.append(Diagnostic(f"row {i}", f"range starts at {row.m_start} with {row.slots} slots; expected start {expected_start}"))
        expected_start = row.m_start + row.slots
        want_tiles = 1 if p.kind == "spmm" else cfg.n_blocks
        if len(row.tiles) != want_tiles:
            diags.append(Diagnostic(f"row {i}", f"{len(row.tiles)} tiles stored, expected {want_tiles}"))
        for j, tile in enumerate(row.tiles):
            if len(tile) != cfg.gy:
                diags.append(Diagnostic(f"row {i} tile {j}", f"{len(tile)} groups, expected gy={cfg.gy}"))
            for g, stream in enumerate(tile):
                diags.extend(_check_stream(p, row, stream, f"row {i} tile {j} group {g}", k))
    if expected_start != m and p.rows:
        diags.append(Diagnostic("program", f"row ranges cover [0, {expected_start}), expected [0, {m})"))
    if p.constant_footprint != F32_BYTES * p.fma_count():
        diags.append(Diagnostic("program", f"constant_footprint {p.constant_footprint} != 4 * {p.fma_count()} FMAs"))
    return diags


def _check_stream(p, row, stream, where, k):
    live = None
    for idx, ins in enumerate(stream):
        at = f"{where} instr {idx}"
        if isinstance(ins, LoadB):
            if p.kind != "spmm":
                yield Diagnostic(at, "ldb in a conv program")
            if not 0 <= ins.k < k:
                yield Diagnostic(at, f"k={ins.k} outside [0, {k})")
            live = ins.breg
        elif isinstance(ins, LoadBVirtual):
            if p.kind != "conv":
                yield Diagnostic(at, "ldbv in an spmm program")
            if not (0 <= ins.c_in < p.dims.get("cin", 0) and 0 <= ins.dy < 3 and 0 <= ins.dx < 3):
                yield Diagnostic(at, f"tap (c={ins.c_in}, dy={ins.dy}, dx={ins.dx}) out of range")
            if ins.guard is Guard.NEVER:
                yield Diagnostic(at, "never-guard load survived elision")
            live = ins.breg
        elif isinstance(ins, Fma):
            if live is None or ins.breg != live:
                yield Diagnostic(at, f"fma reads undefined register r{ins.breg}")
            if not 0 <= ins.acc < row.slots:
                yield Diagnostic(at, f"accumulator a{ins.acc} outside [0, {row.slots})")
            if ins.value == 0 or not np.isfinite(ins.value):
                yield Diagnostic(at, f"bad immediate {ins.value}")
        else:
            yield Diagnostic(at, f"unknown instruction {ins!r}")


# --- serialization ------------------------------------------------------------

def _fmt_num(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def dumps_program(p: KernelProgram) -> str:
    out = [
        f"kernel {p.kind}",
        "dims " + " ".join(f"{key}={val}" for key, val in p.dims.items()),
        f"grid {p.m_blocks} {p.n_blocks}",
        f"gy {p.gy}",
        f"gsy {p.gsy}",
        "machine " + " ".join(f"{key}={_fmt_num(v)}" for key, v in p.machine.as_dict().items()),
        f"constant_footprint {p.constant_footprint}",
        f"spill {int(p.spill)}",
        f"epilogue {p.epilogue}",
    ]
    for i, row in enumerate(p.rows):
        out.append(f"row {i} mstart {row.m_start} slots {row.slots}")
        for j, tile in enumerate(row.tiles):
            out.append("tile *" if p.kind == "spmm" else f"tile {j}")
            for g, stream in enumerate(tile):
                out.append(f"group {g}")
                for ins in stream:
                    if isinstance(ins, LoadB):
                        out.append(f"ldb r{ins.breg} k={ins.k}")
                    elif isinstance(ins, LoadBVirtual):
                        out.append(
                            f"ldbv r{ins.breg} c={ins.c_in} dy={ins.dy} dx={ins.dx} guard={ins.guard.value}"
                        )
                    else:
                        out.append(f"fma a{ins.acc} r{ins.breg} {fmt_f32(ins.value)}")
    out.append("end")
    return "\n".join(out) + "\n"


def _kv(tokens) -> dict:
    return dict(t.split("=", 1) for t in tokens)


def loads_program(text: str) -> KernelProgram:
    lines = iter(enumerate(text.splitlines(), 1))

    def expect(word):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise FormatError(f"truncated program: missing {word!r} line") from None
        tok = line.split()
        if not tok or tok[0] != word:
            raise FormatError(f"line {lineno}: expected {word!r}, got {line!r}")
        return tok[1:]

    kind = expect("kernel")[0]
    dims = {key: int(v) for key, v in _kv(expect("dims")).items()}
    m_blocks, n_blocks = (int(t) for t in expect("grid"))
    gy = int(expect("gy")[0])
    gsy = int(expect("gsy")[0])
    machine = MachineParams.from_dict(_kv(expect("machine")))
    footprint = int(expect("constant_footprint")[0])
    expect("spill")
    epilogue = " ".join(expect("epilogue"))
    config = TileConfig(m_blocks, n_blocks, gy, gsy)
    prog = KernelProgram(kind, dims, config, machine, [], footprint, epilogue)
    stream = None
    for lineno, line in lines:
        tok = line.split()
        if not tok:
            continue
        op = tok[0]
        try:
            if op == "row":
                prog.rows.append(BlockRowCode(int(tok[3]), int(tok[5]), []))
            elif op == "tile":
                prog.rows[-1].tiles.append([])
            elif op == "group":
                stream = []
                prog.rows[-1].tiles[-1].append(stream)
            elif op == "ldb":
                stream.append(LoadB(int(tok[1][1:]), int(_kv(tok[2:])["k"])))
            elif op == "ldbv":
                kv = _kv(tok[2:])
                stream.append(LoadBVirtual(
                    int(tok[1][1:]), int(kv["c"]), int(kv["dy"]), int(kv["dx"]), Guard(kv["guard"])
                ))
            elif op == "fma":
                stream.append(Fma(int(tok[1][1:]), int(tok[2][1:]), np.float32(tok[3])))
            elif op == "end":
                return prog
            else:
                raise FormatError(f"line {lineno}: unknown directive {op!r}")
        except (IndexError, KeyError, ValueError, AttributeError, TypeError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"line {lineno}: malformed {line!r}") from exc
    raise FormatError("missing 'end' line")
