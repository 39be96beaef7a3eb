#!/usr/bin/env python3
"""Tune every SpMM shape in the bundled suite and summarize the work saved.

Prints the tuned configuration, the lane FMA count against the dense
M*K*N multiply count, and whether the baked constants spill.
"""

import argparse

from spgen.codegen import MachineParams
from spgen.suite import load_suite
from spgen.tuner import tune


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", help="problem names to include")
    ap.add_argument("--verify", action="store_true", help="check every candidate against the oracle")
    args = ap.parse_args()

    machine = MachineParams()
    print(f"{'name':<20} {'dims':<16} {'cfgs':>4} {'chosen':<18} {'fma/dense':>9} {'spill':>5} {'cost':>9}")
    for entry in load_suite():
        if entry.kind != "spmm" or (args.only and entry.name not in args.only):
            continue
        problem = entry.problem(args.seed)
        res = tune(problem, machine, verify=args.verify, seed=args.seed)
        best = next(e for e in res.evaluated if e.config == res.chosen)
        m, k, n = problem.dims
        c = res.chosen
        chosen = f"{c.m_blocks},{c.n_blocks},{c.gy},{c.gsy}"
        print(f"{entry.name:<20} {'x'.join(map(str, entry.dims)):<16} {len(res.evaluated):>4} {chosen:<18} "
              f"{best.fma / (m * k * n):>9.4f} {int(best.spill):>5} {best.cost:>9g}")


if __name__ == "__main__":
    main()
