"""Recompilation fidelity of the dissociation target over a delta grid.

    python scripts/recompile_scan.py [--rounds 12] [--t 2.5] [--pattern brick+rung] [--restarts 0]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from doublon_lab.circuit import computational_state, run
from doublon_lab.model import ModelParams
from doublon_lab.recompile import PATTERNS, Ansatz, optimize
from doublon_lab.trotter import TrotterPlan, build_circuit, initial_bits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=12)
    ap.add_argument("--t", type=float, default=2.5)
    ap.add_argument("--initial", default="dissoc", choices=["walk", "dissoc"])
    ap.add_argument("--pattern", default="brick+rung", choices=PATTERNS)
    ap.add_argument("--deltas", type=float, nargs="*", default=list(np.round(np.arange(0.2, 2.01, 0.2), 10)))
    ap.add_argument("--restarts", type=int, default=0)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    L = 7
    q0 = computational_state(initial_bits(L, args.initial))
    ansatz = Ansatz.for_chain(L, args.rounds, args.pattern)
    print("delta  F        iterations  seconds")
    for d in args.deltas:
        t0 = time.perf_counter()
        target = run(build_circuit(TrotterPlan(ModelParams.from_delta(L, d, 10.0, 10.0), args.t), with_init=False), q0)
        res = optimize(ansatz, target, q0, budget=args.budget, seed=args.seed, restarts=args.restarts)
        print(f"{d:4.2f}   {res.fidelity:.5f}  {res.iterations:10d}  {time.perf_counter() - t0:7.1f}", flush=True)


if __name__ == "__main__":
    main()
