"""Command-line entry point: ``spgen {gen,input,compile,run,tune,bench}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from .codegen import MachineParams, compile_conv, compile_spmm, dumps_program, loads_program, validate_program
from .core import ConvProblem, DenseMatrix, SpmmProblem, Tensor3, sparse_random, sparse_from_dense
from .oracle import relative_error
from .schedule import ConfigError, TileConfig
from .suite import load_suite
from .tuner import (
    CONV_TOL,
    SPMM_TOL,
    NoFeasibleConfig,
    SearchSpace,
    VerificationError,
    reference,
    tune,
)
from .vgpu import ExecutionError, estimate_cost, execute


class CliError(Exception):
    pass


def _density(s: str) -> float:
    d = float(s)
    if not 0 < d <= 1:
        raise argparse.ArgumentTypeError(f"density must be in (0, 1], got {s}")
    return d


def _machine_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("machine")
    d = MachineParams()
    g.add_argument("--sm-count", type=int, default=d.sm_count)
    g.add_argument("--max-threads", type=int, default=d.max_threads_per_block)
    g.add_argument("--shared-mem", type=int, default=d.shared_mem_bytes)
    g.add_argument("--const-cache", type=int, default=d.constant_cache_bytes)
    g.add_argument("--c-load", type=float, default=d.c_load)
    g.add_argument("--c-fma", type=float, default=d.c_fma)
    g.add_argument("--c-guard", type=float, default=d.c_guard)
    g.add_argument("--c-reduce", type=float, default=d.c_reduce)
    g.add_argument("--spill-penalty", type=float, default=d.spill_penalty)
    return p


def _machine(args) -> MachineParams:
    return MachineParams(
        sm_count=args.sm_count,
        max_threads_per_block=args.max_threads,
        shared_mem_bytes=args.shared_mem,
        constant_cache_bytes=args.const_cache,
        c_load=args.c_load,
        c_fma=args.c_fma,
        c_guard=args.c_guard,
        c_reduce=args.c_reduce,
        spill_penalty=args.spill_penalty,
    )


def _space(args) -> SearchSpace:
    return SearchSpace(min_gsy=args.min_gsy, max_gsy=args.max_gsy)


def _problem_from_args(args):
    if args.matrix:
        a = formats.read_smtx(args.matrix, value_seed=args.value_seed)
    elif not hasattr(args, "density"):
        raise CliError("--matrix is required")
    elif args.kind == "spmm":
        if None in (args.m, args.k, args.density):
            raise CliError("give --matrix or all of --m --k --density")
        a = sparse_random(args.m, args.k, args.density, args.seed)
    else:
        if None in (args.cin, args.cout, args.density):
            raise CliError("give --matrix or all of --cin --cout --density")
        a = sparse_random(args.cout, args.cin * 9, args.density, args.seed)
    if args.kind == "spmm":
        if args.n is None:
            raise CliError("--n is required")
        return SpmmProblem.from_matrix(a, args.n)
    if None in (args.h, args.w):
        raise CliError("--h and --w are required")
    if a.cols % 9:
        raise CliError(f"filter has {a.cols} columns, not a multiple of 9")
    # --cin/--cout are optional with --matrix but must agree with it
    for flag, given, actual in (("--cin", args.cin, a.cols // 9), ("--cout", args.cout, a.rows)):
        if given is not None and given != actual:
            raise CliError(f"{flag} {given} disagrees with the filter matrix ({actual})")
    return ConvProblem(args.h, args.w, a.cols // 9, a.rows, a)


def _add_problem_flags(p, random_ok: bool):
    p.add_argument("kind", choices=["spmm", "conv"])
    p.add_argument("--matrix", help="SMTX file holding A (spmm) or the filter bank (conv)")
    p.add_argument("--value-seed", type=int, default=None,
                   help="seed for synthesizing values when the SMTX file has none")
    p.add_argument("--n", type=int, help="columns of B (spmm)")
    p.add_argument("--h", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--cin", type=int)
    p.add_argument("--cout", type=int)
    if random_ok:
        p.add_argument("--m", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--density", type=_density)
        p.add_argument("--seed", type=int, default=0)


def cmd_gen(args):
    a = sparse_random(args.rows, args.cols, args.density, args.seed, signed=args.signed)
    formats.write_smtx(args.out, a, with_values=not args.no_values)
    print(f"wrote {args.out}: {a.rows}x{a.cols} nnz={a.nnz}")


def cmd_input(args):
    if args.identity is not None:
        obj = DenseMatrix(np.eye(args.identity, dtype=np.float32))
    else:
        rng = np.random.default_rng(args.seed)
        shape = tuple(args.shape)
        data = rng.random(shape, dtype=np.float32)
        if len(shape) == 2:
            obj = DenseMatrix(data)
        elif len(shape) == 3:
            obj = Tensor3(data)
        else:
            raise CliError("--shape takes 2 (rows cols) or 3 (C H W) integers")
    formats.write_binary(args.out, obj)
    print(f"wrote {args.out}: shape {obj.shape}")


def cmd_compile(args):
    machine = _machine(args)
    problem = _problem_from_args(args)
    _, _, n = problem.dims
    config = TileConfig.for_n(args.mblocks, args.nblocks, args.gy, n)
    prog = compile_spmm(problem, config, machine) if args.kind == "spmm" else compile_conv(problem, config, machine)
    diags = validate_program(prog, machine)
    if diags:
        raise CliError("generated program failed validation:\n  " + "\n  ".join(map(str, diags)))
    Path(args.out).write_text(dumps_program(prog))
    print(
        f"wrote {args.out}: kind={prog.kind} config={config} fma={prog.fma_count()} "
        f"constant_footprint={prog.constant_footprint} spill={int(prog.spill)} "
        f"cost={estimate_cost(prog, machine)!r}"
    )


def _matrix_from_program(prog):
    # every baked FMA names (row, k, value); conv-elided taps contribute nothing anyway
    m, k, _ = prog.mkn
    dense = np.zeros((m, k), dtype=np.float32)
    for row in prog.rows:
        for tile in row.tiles:
            for stream in tile:
                kk = None
                for ins in stream:
                    if hasattr(ins, "value"):
                        dense[row.m_start + ins.acc, kk] = ins.value
                    else:
                        kk = ins.k if hasattr(ins, "k") else ins.c_in * 9 + ins.dy * 3 + ins.dx
    return sparse_from_dense(dense)


def cmd_run(args):
    prog = loads_program(Path(args.program).read_text())
    b = formats.read_binary(args.input)
    report = execute(prog, b, prog.machine)
    report.extra["cost"] = estimate_cost(report, prog.machine)
    if args.out:
        formats.write_binary(args.out, report.output)
    text = report.dumps()
    if args.report:
        Path(args.report).write_text(text)
    print(text, end="")
    if args.verify:
        a = formats.read_smtx(args.matrix, value_seed=args.value_seed) if args.matrix else _matrix_from_program(prog)
        if prog.kind == "spmm":
            problem = SpmmProblem.from_matrix(a, prog.mkn[2])
            tol = SPMM_TOL
        else:
            d = prog.dims
            problem = ConvProblem(d["h"], d["w"], d["cin"], d["cout"], a)
            tol = CONV_TOL
        ref, mag = reference(problem, b)
        err = relative_error(report.output, ref, mag)
        status = "ok" if err <= tol else "FAILED"
        print(f"verify: max_rel_error={err:.3e} tol={tol:g} {status}")
        if err > tol:
            return 1
    return 0


def cmd_tune(args):
    machine = _machine(args)
    problem = _problem_from_args(args)
    res = tune(problem, machine, mode=args.mode, verify=args.verify, seed=args.seed, space=_space(args))
    text = res.dumps()
    if args.out:
        Path(args.out).write_text(text)
    failed = sum(not e.ok for e in res.evaluated)
    print(f"evaluated {len(res.evaluated)} configs ({failed} failed to compile); chosen {res.chosen}")
    if args.verify or args.mode == "simulate":
        print("verify: all configs within tolerance")
    return 0


BENCH_COLUMNS = "name kind dims density nnz m_blocks n_blocks gy gsy fma loads footprint spill cost"


def cmd_bench(args):
    machine = _machine(args)
    entries = load_suite(args.suite)
    if args.only:
        unknown = sorted(set(args.only) - {e.name for e in entries})
        if unknown:
            raise CliError(f"unknown problem name(s): {' '.join(unknown)}")
        entries = [e for e in entries if e.name in set(args.only)]
    lines = [BENCH_COLUMNS]
    for e in entries:
        problem = e.problem(args.seed, args.density)
        res = tune(problem, machine, mode=args.mode, verify=args.verify, seed=args.seed, space=_space(args))
        best = next(ev for ev in res.evaluated if ev.config == res.chosen)
        a = problem.filter if isinstance(problem, ConvProblem) else problem.a
        c = res.chosen
        dens = e.density if args.density is None else args.density
        line = (
            f"{e.name} {e.kind} {'x'.join(map(str, e.dims))} {dens:g} {a.nnz} "
            f"{c.m_blocks} {c.n_blocks} {c.gy} {c.gsy} {best.fma} {best.loads} "
            f"{4 * a.nnz if e.kind == 'spmm' else _footprint(problem, c, machine)} {int(best.spill)} {best.cost!r}"
        )
        lines.append(line)
        print(line, flush=True)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def _footprint(problem, config, machine):
    return compile_conv(problem, config, machine).constant_footprint


def build_parser() -> argparse.ArgumentParser:
    mp = _machine_parser()
    parser = argparse.ArgumentParser(prog="spgen", description="Sparse kernel compiler and virtual-GPU executor")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="write a seeded random sparse matrix (SMTX)")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--density", type=_density, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--signed", action="store_true", help="random signs on the values")
    p.add_argument("--no-values", action="store_true", help="omit the optional values line")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("input", help="write a dense B matrix or input tensor (binary)")
    p.add_argument("--shape", type=int, nargs="+", help="rows cols, or C H W")
    p.add_argument("--identity", type=int, help="write an n x n identity instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_input)

    p = sub.add_parser("compile", parents=[mp], help="compile one configuration to a kernel program")
    _add_problem_flags(p, random_ok=False)
    p.add_argument("--mblocks", type=int, required=True)
    p.add_argument("--nblocks", type=int, required=True)
    p.add_argument("--gy", type=int, required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="execute a kernel program on the virtual GPU")
    p.add_argument("program")
    p.add_argument("input", help="dense binary B (spmm) or tensor binary (conv)")
    p.add_argument("-o", "--out", help="write the output in binary format")
    p.add_argument("--report", help="also write the metric report here")
    p.add_argument("--verify", action="store_true", help="check the output against the dense oracle")
    p.add_argument("--matrix", help="original SMTX for --verify (default: recovered from the program)")
    p.add_argument("--value-seed", type=int, default=None)
    p.set_defaults(func=cmd_run)

    for name, helptext, func in [
        ("tune", "grid-search tiling parameters for one problem", cmd_tune),
        ("bench", "tune every problem of a suite and tabulate metrics", cmd_bench),
    ]:
        p = sub.add_parser(name, parents=[mp], help=helptext)
        if name == "tune":
            _add_problem_flags(p, random_ok=True)
        else:
            p.add_argument("--suite", help="suite file (default: bundled suite)")
            p.add_argument("--only", nargs="+", help="restrict to these problem names")
            p.add_argument("--density", type=_density, help="override every entry's density")
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--mode", choices=["estimate", "simulate"], default="estimate")
        p.add_argument("--verify", action="store_true")
        p.add_argument("--min-gsy", type=int, default=SearchSpace.min_gsy)
        p.add_argument("--max-gsy", type=int, default=SearchSpace.max_gsy)
        p.add_argument("-o", "--out")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except (CliError, ConfigError, NoFeasibleConfig, VerificationError, ExecutionError,
            formats.FormatError, ValueError, OSError) as exc:
        print(f"spgen {args.cmd}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
