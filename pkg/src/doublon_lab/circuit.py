"""Gate lists, statevector simulation, shot sampling and a stochastic Pauli noise backend.

Amplitude index convention: qubit 0 is the most significant bit, so the
binary expansion of an index, written left to right, lists qubits
``0, 1, ..., n-1``.  Bitstrings in :class:`Counts` use the same order
(qubit 0 is the leftmost character).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import _kernels

GATE_ARITY = {"U3": 1, "RZ": 1, "X": 1, "CZ": 2, "CNOT": 2, "RZZ": 2}
GATE_NPARAMS = {"U3": 3, "RZ": 1, "X": 0, "CZ": 0, "CNOT": 0, "RZZ": 1}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name not in GATE_ARITY:
            raise CircuitError(f"unknown gate {self.name!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.qubits) != GATE_ARITY[self.name]:
            raise CircuitError(f"{self.name} acts on {GATE_ARITY[self.name]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.name} needs distinct qubits, got {self.qubits}")
        if len(self.params) != GATE_NPARAMS[self.name]:
            raise CircuitError(f"{self.name} takes {GATE_NPARAMS[self.name]} parameter(s), got {self.params}")

    @property
    def arity(self) -> int:
        return len(self.qubits)

    def matrix(self) -> np.ndarray:
        """Unitary on ``self.qubits`` (first listed qubit is the high bit)."""
        n = self.name
        if n == "U3":
            return u3_matrix(*self.params)
        if n == "RZ":
            a = self.params[0]
            return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
        if n == "X":
            return np.array([[0, 1], [1, 0]], dtype=np.complex128)
        if n == "CZ":
            return np.diag([1, 1, 1, -1]).astype(np.complex128)
        if n == "CNOT":
            return np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128)
        a = self.params[0]
        return np.diag(np.exp(-0.5j * a * np.array([1, -1, -1, 1])))

    def inverse(self) -> Gate:
        if self.name == "U3":
            theta, phi, lam = self.params
            return Gate("U3", self.qubits, (-theta, -lam, -phi))
        if self.name in ("RZ", "RZZ"):
            return Gate(self.name, self.qubits, (-self.params[0],))
        return self

    def to_text(self) -> str:
        return " ".join([self.name, *map(str, self.qubits), *(repr(p) for p in self.params)])

    @classmethod
    def from_text(cls, line: str) -> Gate:
        name, *rest = line.split()
        k = GATE_ARITY[name]
        return cls(name, tuple(int(x) for x in rest[:k]), tuple(float(x) for x in rest[k:]))


def u3_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=np.complex128,
    )


def u3(q, theta, phi, lam):
    return Gate("U3", (q,), (theta, phi, lam))


def ry(q, theta):
    return Gate("U3", (q,), (theta, 0.0, 0.0))


def rz(q, alpha):
    return Gate("RZ", (q,), (alpha,))


def x(q):
    return Gate("X", (q,))


def cz(a, b):
    return Gate("CZ", (a, b))


def cnot(control, target):
    return Gate("CNOT", (control, target))


def rzz(a, b, alpha):
    return Gate("RZZ", (a, b), (alpha,))


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        self.gates = list(self.gates)
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate):
        if any(not 0 <= q < self.n_qubits for q in g.qubits):
            raise CircuitError(f"{g} uses a qubit outside 0..{self.n_qubits - 1}")

    def append(self, g: Gate) -> Circuit:
        self._check(g)
        self.gates.append(g)
        return self

    def extend(self, gates: Iterable[Gate]) -> Circuit:
        for g in gates:
            self.append(g)
        return self

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def __add__(self, other: Circuit) -> Circuit:
        if other.n_qubits != self.n_qubits:
            raise CircuitError("qubit counts differ")
        return Circuit(self.n_qubits, self.gates + other.gates)

    def count(self, *names: str) -> int:
        return sum(g.name in names for g in self.gates)

    @property
    def two_qubit_count(self) -> int:
        return sum(g.arity == 2 for g in self.gates)

    def inverse(self) -> Circuit:
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def unitary(self) -> np.ndarray:
        """Dense unitary, column k = circuit applied to basis state k. Small circuits only."""
        dim = 1 << self.n_qubits
        if self.n_qubits > 10:
            raise CircuitError("unitary() is limited to 10 qubits")
        return np.stack([run(self, np.eye(dim, dtype=np.complex128)[k]) for k in range(dim)], axis=1)

    def to_text(self) -> str:
        return "".join(g.to_text() + "\n" for g in self.gates)

    @classmethod
    def from_text(cls, n_qubits: int, text: str) -> Circuit:
        lines = [ln.strip() for ln in text.splitlines()]
        return cls(n_qubits, [Gate.from_text(ln) for ln in lines if ln and not ln.startswith("#")])


# ---------------------------------------------------------------------------
# statevector kernels
# ---------------------------------------------------------------------------


def zero_state(n_qubits: int) -> np.ndarray:
    psi = np.zeros(1 << n_qubits, dtype=np.complex128)
    psi[0] = 1.0
    return psi


def computational_state(bits: str) -> np.ndarray:
    psi = np.zeros(1 << len(bits), dtype=np.complex128)
    psi[int(bits, 2)] = 1.0
    return psi


def _n_qubits(psi: np.ndarray) -> int:
    n = psi.size.bit_length() - 1
    if psi.ndim != 1 or 1 << n != psi.size:
        raise CircuitError(f"state of size {psi.size} is not a qubit register")
    return n


def _view1(psi, n, q):
    return psi.reshape(1 << q, 2, 1 << (n - q - 1))


def _view2(psi, n, a, b):
    lo, hi = min(a, b), max(a, b)
    v = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - hi - 1))
    return v, a < b


def _apply_1q(psi, n, q, m):
    v = _view1(psi, n, q)
    a0 = v[:, 0, :].copy()
    a1 = v[:, 1, :]
    v[:, 0, :] *= m[0, 0]
    v[:, 0, :] += m[0, 1] * a1
    a1 *= m[1, 1]
    a1 += m[1, 0] * a0


def _apply_2q_dense(psi, n, a, b, m):
    t = psi.reshape((2,) * n)
    t2 = np.tensordot(m.reshape(2, 2, 2, 2), t, axes=((2, 3), (a, b)))
    psi[:] = np.moveaxis(t2, (0, 1), (a, b)).reshape(-1)


def apply(psi: np.ndarray, g: Gate) -> np.ndarray:
    """Apply ``g`` to ``psi`` in place and return it."""
    n = _n_qubits(psi)
    if any(not 0 <= q < n for q in g.qubits):
        raise CircuitError(f"{g} out of range for {n} qubits")
    name = g.name
    if name == "X":
        v = _view1(psi, n, g.qubits[0])
        v[:, [0, 1], :] = v[:, [1, 0], :]
    elif name == "RZ":
        v = _view1(psi, n, g.qubits[0])
        a = g.params[0]
        v[:, 0, :] *= np.exp(-0.5j * a)
        v[:, 1, :] *= np.exp(0.5j * a)
    elif name == "U3":
        _apply_1q(psi, n, g.qubits[0], g.matrix())
    elif name == "CZ":
        v, _ = _view2(psi, n, *g.qubits)
        v[:, 1, :, 1, :] *= -1.0
    elif name == "RZZ":
        v, _ = _view2(psi, n, *g.qubits)
        ph = np.exp(-0.5j * g.params[0])
        v[:, 0, :, 0, :] *= ph
        v[:, 1, :, 1, :] *= ph
        v[:, 0, :, 1, :] *= ph.conjugate()
        v[:, 1, :, 0, :] *= ph.conjugate()
    elif name == "CNOT":
        v, ordered = _view2(psi, n, *g.qubits)
        if ordered:  # control is the lower-index (outer) axis
            v[:, 1, :, [0, 1], :] = v[:, 1, :, [1, 0], :]
        else:
            v[:, [0, 1], :, 1, :] = v[:, [1, 0], :, 1, :]
    else:  # pragma: no cover - guarded by Gate validation
        _apply_2q_dense(psi, n, *g.qubits, g.matrix())
    return psi


def apply_pauli(psi: np.ndarray, q: int, pauli: str) -> np.ndarray:
    n = _n_qubits(psi)
    v = _view1(psi, n, q)
    if pauli == "X":
        v[:, [0, 1], :] = v[:, [1, 0], :]
    elif pauli == "Z":
        v[:, 1, :] *= -1.0
    elif pauli == "Y":
        a0 = v[:, 0, :].copy()
        v[:, 0, :] = -1j * v[:, 1, :]
        v[:, 1, :] = 1j * a0
    elif pauli != "I":
        raise CircuitError(f"unknown Pauli {pauli!r}")
    return psi


_DIAGONAL_2Q = ("CZ", "RZZ")
_PAULI_MATS = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
_NO_FAULTS = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 2, 2), np.complex128))


@dataclass
class Program:
    """A circuit flattened into arrays for the compiled kernel."""

    n_qubits: int
    ops: np.ndarray
    qa: np.ndarray
    qb: np.ndarray
    mats: np.ndarray

    @classmethod
    def compile(cls, c: Circuit) -> Program:
        G = len(c.gates)
        ops = np.zeros(G, np.int64)
        qa = np.zeros(G, np.int64)
        qb = np.zeros(G, np.int64)
        mats = np.zeros((G, 4, 4), np.complex128)
        for k, g in enumerate(c.gates):
            m = g.matrix()
            qa[k] = g.qubits[0]
            if g.arity == 1:
                ops[k] = _kernels.OP_1Q
                mats[k, :2, :2] = m
            else:
                qb[k] = g.qubits[1]
                if g.name in _DIAGONAL_2Q:
                    ops[k] = _kernels.OP_DIAG2
                    mats[k, 0] = np.diag(m)
                else:
                    ops[k] = _kernels.OP_2Q
                    mats[k] = m
        return cls(c.n_qubits, ops, qa, qb, mats)

    def __len__(self) -> int:
        return self.ops.size

    def execute(self, psi: np.ndarray, start: int = 0, stop: int | None = None, faults=_NO_FAULTS) -> np.ndarray:
        """Apply gates ``start..stop-1`` to ``psi`` in place; ``faults`` as built by :func:`_fault_arrays`."""
        stop = len(self) if stop is None else stop
        _kernels.run_program(psi, self.n_qubits, self.ops, self.qa, self.qb, self.mats, start, stop, *faults)
        return psi


def run(c: Circuit, psi0: np.ndarray) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.size != 1 << c.n_qubits:
        raise CircuitError(f"state size {psi0.size} does not match {c.n_qubits} qubits")
    return Program.compile(c).execute(psi0.copy())


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class Counts:
    n_qubits: int
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for bits, k in self.counts.items():
            if len(bits) != self.n_qubits or set(bits) - {"0", "1"}:
                raise CircuitError(f"bitstring {bits!r} is not {self.n_qubits} binary digits")
            if k < 0:
                raise CircuitError(f"negative count {k} for {bits}")

    @property
    def total_shots(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, bits: str) -> int:
        return self.counts.get(bits, 0)

    def __len__(self) -> int:
        return len(self.counts)

    def items(self):
        return self.counts.items()

    def merge(self, other: Counts) -> Counts:
        merged = Counter(self.counts)
        merged.update(other.counts)
        return Counts(self.n_qubits, dict(merged))

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(bits, weights): a (k, n_qubits) 0/1 matrix and the matching counts."""
        keys = sorted(self.counts)
        bits = np.array([[c == "1" for c in k] for k in keys], dtype=np.float64).reshape(len(keys), self.n_qubits)
        return bits, np.array([self.counts[k] for k in keys], dtype=np.float64)

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bitstring", "count"])
            for k in sorted(self.counts):
                w.writerow([k, self.counts[k]])

    @classmethod
    def read_csv(cls, path: str | Path) -> Counts:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise CircuitError(f"{path}: no counts")
        return cls(len(rows[0]["bitstring"]), {r["bitstring"]: int(r["count"]) for r in rows})


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def counts_from_probabilities(prob: np.ndarray, shots: int, seed=None) -> Counts:
    n = _n_qubits(prob)
    p = np.clip(prob.real, 0.0, None)
    draws = _rng(seed).multinomial(shots, p / p.sum())
    nz = np.flatnonzero(draws)
    return Counts(n, {format(int(i), f"0{n}b"): int(draws[i]) for i in nz})


def sample(psi: np.ndarray, shots: int, seed=None) -> Counts:
    if shots <= 0:
        raise CircuitError("shots must be positive")
    return counts_from_probabilities(np.abs(psi) ** 2, shots, seed)


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing noise applied after every gate.

    With probability ``p1`` (single-qubit gates) or ``p2`` (two-qubit gates)
    the gate's qubits are hit by a Pauli drawn uniformly from all ``4**k``
    strings, identity included, so ``p = 1`` fully depolarizes.
    """

    p1: float = 0.001
    p2: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("p1", "p2"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise CircuitError(f"{name}={p} outside [0, 1]")

    def probability(self, g: Gate) -> float:
        return self.p1 if g.arity == 1 else self.p2


_PAULIS = "IXYZ"
CHECKPOINT_STRIDE = 8


def _trajectory_faults(c: Circuit, probs: np.ndarray, rng: np.random.Generator) -> dict[int, list[tuple[int, str]]]:
    hit = np.flatnonzero(rng.random(len(probs)) < probs)
    faults = {}
    for k in hit.tolist():
        qubits = c.gates[k].qubits
        label = rng.integers(4 ** len(qubits))
        ops = []
        for q in qubits:
            label, r = divmod(int(label), 4)
            if r:
                ops.append((q, _PAULIS[r]))
        if ops:
            faults[k] = ops
    return faults


def _fault_arrays(faults: dict[int, list[tuple[int, str]]]):
    items = [(k, q, p) for k in sorted(faults) for q, p in faults[k]]
    return (
        np.array([k for k, _, _ in items], np.int64),
        np.array([q for _, q, _ in items], np.int64),
        np.array([_PAULI_MATS[p] for _, _, p in items], np.complex128).reshape(-1, 2, 2),
    )


def run_noisy(
    c: Circuit,
    psi0: np.ndarray,
    nm: NoiseModel,
    trajectories: int,
    shots_per_traj: int,
    seed: int | None = None,
) -> Counts:
    """Monte-Carlo trajectories of ``c`` under ``nm``; counts pooled over trajectories.

    Trajectory ``k`` uses an RNG spawned from ``seed`` (default ``nm.seed``),
    so results do not depend on evaluation order.
    """
    if trajectories <= 0 or shots_per_traj <= 0:
        raise CircuitError("trajectories and shots_per_traj must be positive")
    n = c.n_qubits
    prog = Program.compile(c)
    probs = np.array([nm.probability(g) for g in c.gates])

    # ideal states before gate k*stride, shared by all trajectories
    checkpoints = []
    psi = np.asarray(psi0, dtype=np.complex128).copy()
    for start in range(0, len(prog), CHECKPOINT_STRIDE):
        checkpoints.append(psi.copy())
        prog.execute(psi, start, min(start + CHECKPOINT_STRIDE, len(prog)))
    ideal_prob = np.abs(psi) ** 2

    tally = np.zeros(1 << n, dtype=np.int64)
    seeds = np.random.SeedSequence(nm.seed if seed is None else seed).spawn(trajectories)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        faults = _trajectory_faults(c, probs, rng)
        if not faults:
            prob = ideal_prob
        else:
            first = min(faults)
            start = (first // CHECKPOINT_STRIDE) * CHECKPOINT_STRIDE
            psi = checkpoints[start // CHECKPOINT_STRIDE].copy()
            prog.execute(psi, start, len(prog), _fault_arrays(faults))
            prob = np.abs(psi) ** 2
        tally += rng.multinomial(shots_per_traj, prob / prob.sum())
    nz = np.flatnonzero(tally)
    return Counts(n, {format(int(i), f"0{n}b"): int(tally[i]) for i in nz})
