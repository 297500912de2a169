"""First-order Trotter circuits for the qubit Hamiltonian.

One step applies, in circuit order: bond blocks on even bonds of both chains,
bond blocks on odd bonds, the inter-chain ZZ rotations, then the single-qubit
Z rotations.

Two groupings of the intra-chain ZZ (V) terms are available:

``"bond"``
    V/4 ZZ sits inside each bond block next to the hopping.
``"diagonal"`` (default)
    bond blocks carry only the hopping; the V/4 ZZ terms are applied as RZZ
    gates together with the inter-chain ones.  All diagonal terms then commute
    and are applied exactly, which roughly halves the Trotter error at
    U = V = 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .circuit import Circuit, Gate, cnot, ry, rz, rzz, x
from .exact import INITIAL_STATES
from .model import ModelParams

DEFAULT_DT = 0.1
GROUPINGS = ("diagonal", "bond")


def bond_gate(J: float, V: float, dt: float, q0: int = 0, q1: int = 1) -> list[Gate]:
    """exp(-i dt [J/2 (XX + YY) + V/4 ZZ]) on (q0, q1), up to global phase, with three CNOTs."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    half_pi = math.pi / 2
    return [
        rz(q1, -half_pi),
        cnot(q1, q0),
        rz(q0, -half_pi + V * dt / 2),
        ry(q1, half_pi - J * dt),
        cnot(q0, q1),
        ry(q1, -half_pi + J * dt),
        cnot(q1, q0),
        rz(q0, half_pi),
    ]


def z_phase(params: ModelParams, q: int, dt: float) -> float:
    """Angle Phi of exp(i Phi Z_q) from the linear Z terms."""
    L = params.L
    V = params.V_upup if q < L else params.V_dndn
    j = q % L
    return V * dt / 4 if j in (0, L - 1) else V * dt / 2


def build_step(params: ModelParams, dt: float, grouping: str = "diagonal") -> Circuit:
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}, got {grouping!r}")
    L = params.L
    c = Circuit(2 * L)
    chains = ((0, params.J_up, params.V_upup), (L, params.J_dn, params.V_dndn))
    in_bond = grouping == "bond"
    for parity in (0, 1):
        for offset, J, V in chains:
            Vb = V if in_bond else 0.0
            if J == 0 and Vb == 0:
                continue
            for j in range(parity, L - 1, 2):
                c.extend(bond_gate(J, Vb, dt, offset + j, offset + j + 1))
    if not in_bond:
        for offset, _, V in chains:
            if V != 0:
                for j in range(L - 1):
                    c.append(rzz(offset + j, offset + j + 1, V * dt / 2))
    if params.U != 0:
        for j in range(L):
            c.append(rzz(j, L + j, params.U * dt / 2))
    for q in range(2 * L):
        phi = z_phase(params, q, dt)
        if phi != 0:
            c.append(rz(q, -2 * phi))
    return c


def preparation(L: int, initial: str = "walk") -> Circuit:
    """X gates creating the chosen three-particle configuration from |0...0>."""
    up, dn = INITIAL_STATES[initial](L)
    return Circuit(2 * L, [x(q) for q in up] + [x(L + q) for q in dn])


def initial_bits(L: int, initial: str = "walk") -> str:
    up, dn = INITIAL_STATES[initial](L)
    occ = set(up) | {L + q for q in dn}
    return "".join("1" if q in occ else "0" for q in range(2 * L))


@dataclass
class TrotterPlan:
    params: ModelParams
    t: float
    dt: float = DEFAULT_DT
    grouping: str = "diagonal"
    n_steps: int = field(init=False)
    layers: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if self.t < 0 or self.dt <= 0:
            raise ValueError("need t >= 0 and dt > 0")
        if self.grouping not in GROUPINGS:
            raise ValueError(f"grouping must be one of {GROUPINGS}, got {self.grouping!r}")
        # order of the gate layers inside one step, "V" being the separate intra-chain RZZ layer
        self.layers = ("A_even", "A_odd", "B", "C") if self.grouping == "bond" else ("A_even", "A_odd", "V", "B", "C")
        # the slack keeps t = 1.6, dt = 0.1 at 16 steps; any t > 0 gets at least one
        self.n_steps = max(int(math.ceil(self.t / self.dt - 1e-9)), int(self.t > 0))
        if self.n_steps:
            # shrink dt so n_steps * dt hits t exactly
            self.dt = self.t / self.n_steps


def build_circuit(plan: TrotterPlan, with_init: bool = True, initial: str = "walk") -> Circuit:
    L = plan.params.L
    c = preparation(L, initial) if with_init else Circuit(2 * L)
    if plan.n_steps:
        step = build_step(plan.params, plan.dt, plan.grouping)
        for _ in range(plan.n_steps):
            c.extend(step.gates)
    return c
