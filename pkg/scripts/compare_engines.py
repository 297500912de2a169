"""Exact, Trotter and recompiled P_updn / P_upup side by side on one time grid (L = 7).

    python scripts/compare_engines.py [--delta 0.2] [--t-max 1.6] [--rounds 8]
"""

from __future__ import annotations

import argparse

import numpy as np

from doublon_lab.circuit import computational_state, run
from doublon_lab.exact import embed_in_qubits, evolve, initial_state, measure, phase_aligned_distance
from doublon_lab.experiments import qubit_record
from doublon_lab.model import ModelParams, build_fock_hamiltonian, build_sector_basis
from doublon_lab.recompile import Ansatz, optimize
from doublon_lab.trotter import TrotterPlan, build_circuit, initial_bits


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delta", type=float, default=0.2)
    ap.add_argument("--U", type=float, default=10.0)
    ap.add_argument("--V", type=float, default=10.0)
    ap.add_argument("--initial", default="walk", choices=["walk", "dissoc"])
    ap.add_argument("--t-max", type=float, default=1.6)
    ap.add_argument("--t-step", type=float, default=0.4)
    ap.add_argument("--rounds", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    L = 7
    p = ModelParams.from_delta(L, args.delta, args.U, args.V)
    basis = build_sector_basis(p, 2, 1)
    H = build_fock_hamiltonian(basis)
    psi0 = initial_state(basis, args.initial)
    q0 = computational_state(initial_bits(L, args.initial))
    ansatz = Ansatz.for_chain(L, args.rounds)
    warm = None
    print("t      exact(ud,uu)     trotter(ud,uu)   recompiled(ud,uu)  |trot-exact|  F")
    for t in np.arange(args.t_step, args.t_max + 1e-9, args.t_step):
        ex_psi = evolve(H, psi0, t)
        ex = measure(ex_psi, basis)
        tro_psi = run(build_circuit(TrotterPlan(p, t), with_init=False, initial=args.initial), q0)
        tro = qubit_record(tro_psi, L, t)
        res = optimize(ansatz, tro_psi, q0, seed=args.seed, theta0=warm)
        warm = res.theta_opt
        rec = qubit_record(run(ansatz.circuit(res.theta_opt), q0), L, t)
        dist = phase_aligned_distance(tro_psi, embed_in_qubits(ex_psi, basis))
        print(
            f"{t:4.1f}  {ex.p_updn:.3f} {ex.p_upup:.3f}      {tro.p_updn:.3f} {tro.p_upup:.3f}      "
            f"{rec.p_updn:.3f} {rec.p_upup:.3f}        {dist:.4f}      {res.fidelity:.4f}",
            flush=True,
        )


if __name__ == "__main__":
    main()
