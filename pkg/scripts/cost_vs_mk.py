#!/usr/bin/env python3
"""Sweep square-ish SpMM shapes at fixed N and density; print the tuned cost.

The model is ordinal. What matters is the trend: cost grows with M*K, and
jumps once the baked constants stop fitting in the constant cache.
"""

import argparse

from spgen.codegen import MachineParams
from spgen.core import SpmmProblem, sparse_random
from spgen.tuner import tune


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--density", type=float, default=0.10)
    ap.add_argument("--max-side", type=int, default=512)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    machine = MachineParams()
    shapes = []
    m = k = 32
    while m <= args.max_side:
        shapes.append((m, k))
        if k == m:
            k *= 2
        else:
            m *= 2
    print(f"{'M':>6} {'K':>6} {'M*K':>9} {'nnz':>7} {'spill':>5} {'cost':>9} {'cost/MK':>9}  chosen")
    for m, k in shapes:
        a = sparse_random(m, k, args.density, args.seed)
        res = tune(SpmmProblem.from_matrix(a, args.n), machine)
        best = next(e for e in res.evaluated if e.config == res.chosen)
        print(f"{m:>6} {k:>6} {m * k:>9} {a.nnz:>7} {int(best.spill):>5} {best.cost:>9g} "
              f"{best.cost / (m * k):>9.4f}  {res.chosen}")


if __name__ == "__main__":
    main()
