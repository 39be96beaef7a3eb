#!/usr/bin/env python3
"""Padding-guard statistics for the 3x3 conv shapes in the bundled suite.

For each shape and a few lane widths, report how many filter taps were
dropped at compile time (all lanes in the padding), and how many loads
still need a runtime bounds check.
"""

import argparse

from spgen.codegen import MachineParams, compile_conv
from spgen.schedule import TileConfig
from spgen.suite import load_suite
from spgen.vgpu import StaticMetrics


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mblocks", type=int, default=8)
    ap.add_argument("--gy", type=int, default=2)
    args = ap.parse_args()

    print(f"{'name':<16} {'gsy':>5} {'fma kept':>10} {'elided':>8} {'loads':>8} {'mixed':>7} {'mixed %':>8}")
    for entry in load_suite():
        if entry.kind != "conv":
            continue
        problem = entry.problem(args.seed)
        n = problem.height * problem.width
        for gsy in sorted({problem.width, 2 * problem.width, n // 7 if n % 7 == 0 else problem.width}):
            if n % gsy:
                continue
            cfg = TileConfig.for_n(min(args.mblocks, problem.c_out), n // gsy, args.gy, n)
            prog = compile_conv(problem, cfg, MachineParams())
            static = StaticMetrics.of(prog)
            total = problem.filter.nnz * cfg.n_blocks
            kept = prog.fma_count()
            loads = static.b_loads // gsy
            mixed = static.guarded_loads // gsy
            print(f"{entry.name:<16} {gsy:>5} {kept:>10} {total - kept:>8} {loads:>8} {mixed:>7} "
                  f"{100 * mixed / max(loads, 1):>7.1f}%")


if __name__ == "__main__":
    main()
