"""Extended Fermi-Hubbard chain: parameters, sector basis, Hamiltonians.

Two fermion components (up, down) live on an open chain of ``L`` sites.
Sites are 0-based internally; :func:`center_site` maps the symmetric
labels ``-(L-1)/2 ... (L-1)/2`` used for the initial configurations.

Fock states are stored as a pair of bitmasks, bit ``i`` of a mask being the
occupation of site ``i``.  The qubit encoding uses qubits ``0..L-1`` for the
up chain and ``L..2L-1`` for the down chain, with qubit 0 the most
significant bit of a computational-basis index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


class ParameterError(ValueError):
    """Invalid model parameters or particle-number sector."""


@dataclass(frozen=True)
class ModelParams:
    L: int
    J_up: float = 1.0
    J_dn: float = 1.0
    U: float = 0.0
    V_upup: float = 0.0
    V_dndn: float | None = None
    V_updn: float = 0.0

    def __post_init__(self):
        # even L is allowed for engine checks; experiments need a center site
        if not isinstance(self.L, (int, np.integer)) or self.L < 2:
            raise ParameterError(f"L must be an integer >= 2, got {self.L!r}")
        if not self.J_up > 0:
            raise ParameterError(f"J_up must be positive, got {self.J_up!r}")
        if self.V_dndn is None:
            # down-down NN interaction mirrors the up-up one unless given
            object.__setattr__(self, "V_dndn", float(self.V_upup))

    @classmethod
    def from_delta(cls, L: int, delta: float, U: float, V: float, J_up: float = 1.0, **kw) -> ModelParams:
        return cls(L=L, J_up=J_up, J_dn=delta * J_up, U=U, V_upup=V, **kw)

    @property
    def delta(self) -> float:
        """Hopping imbalance J_dn / J_up."""
        return self.J_dn / self.J_up

    @property
    def n_qubits(self) -> int:
        return 2 * self.L

    def to_dict(self) -> dict:
        return asdict(self)


def center_site(params_or_L: ModelParams | int, s: int = 0) -> int:
    """Internal index of the site labelled ``s`` relative to the chain center."""
    L = params_or_L.L if isinstance(params_or_L, ModelParams) else int(params_or_L)
    if L % 2 == 0:
        raise ParameterError(f"L must be odd to have a center site, got {L}")
    half = (L - 1) // 2
    if not -half <= s <= half:
        raise ParameterError(f"site label {s} outside chain of length {L}")
    return s + half


class FockState(NamedTuple):
    up_occ: int
    dn_occ: int

    def sites(self) -> tuple[list[int], list[int]]:
        return _bits(self.up_occ), _bits(self.dn_occ)


def _bits(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def _masks_with_popcount(L: int, n: int) -> np.ndarray:
    masks = [sum(1 << i for i in combo) for combo in itertools.combinations(range(L), n)]
    return np.array(sorted(masks), dtype=np.int64)


def _popcount(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.uint64)
    return np.unpackbits(arr.view(np.uint8).reshape(*arr.shape, 8), axis=-1).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Fixed-(n_up, n_dn) Fock basis, ordered lexicographically on (up_occ, dn_occ)."""

    params: ModelParams
    n_up: int
    n_dn: int
    up_masks: np.ndarray = field(repr=False)
    dn_masks: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.params.L

    @property
    def dim(self) -> int:
        return len(self.up_masks) * len(self.dn_masks)

    def __len__(self) -> int:
        return self.dim

    @cached_property
    def _up_lookup(self) -> dict[int, int]:
        return {int(m): i for i, m in enumerate(self.up_masks)}

    @cached_property
    def _dn_lookup(self) -> dict[int, int]:
        return {int(m): i for i, m in enumerate(self.dn_masks)}

    @property
    def states(self) -> list[FockState]:
        return [FockState(int(u), int(d)) for u in self.up_masks for d in self.dn_masks]

    def state(self, k: int) -> FockState:
        nd = len(self.dn_masks)
        return FockState(int(self.up_masks[k // nd]), int(self.dn_masks[k % nd]))

    def index(self, state: FockState | tuple[int, int]) -> int:
        up, dn = state
        try:
            return self._up_lookup[int(up)] * len(self.dn_masks) + self._dn_lookup[int(dn)]
        except KeyError:
            raise ParameterError(f"state {state} is not in sector ({self.n_up}, {self.n_dn})") from None

    @cached_property
    def up_occupations(self) -> np.ndarray:
        """(dim, L) 0/1 matrix of up occupations, row k for basis state k."""
        occ = (self.up_masks[:, None] >> np.arange(self.L)) & 1
        return np.repeat(occ, len(self.dn_masks), axis=0).astype(np.float64)

    @cached_property
    def dn_occupations(self) -> np.ndarray:
        occ = (self.dn_masks[:, None] >> np.arange(self.L)) & 1
        return np.tile(occ, (len(self.up_masks), 1)).astype(np.float64)

    @cached_property
    def qubit_indices(self) -> np.ndarray:
        """Computational-basis index (2L qubits) of every sector state."""
        L = self.L
        up = _reverse_bits(self.up_masks, L)
        dn = _reverse_bits(self.dn_masks, L)
        return ((up[:, None] << L) | dn[None, :]).ravel()


def _reverse_bits(masks: np.ndarray, L: int) -> np.ndarray:
    # site i -> qubit i, and qubit 0 is the most significant bit
    out = np.zeros_like(masks)
    for i in range(L):
        out |= ((masks >> i) & 1) << (L - 1 - i)
    return out


def build_sector_basis(params: ModelParams, n_up: int, n_dn: int) -> SectorBasis:
    L = params.L
    for name, n in (("n_up", n_up), ("n_dn", n_dn)):
        if not 0 <= n <= L:
            raise ParameterError(f"{name}={n} outside [0, {L}]")
    return SectorBasis(params, n_up, n_dn, _masks_with_popcount(L, n_up), _masks_with_popcount(L, n_dn))


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    matrix: sp.csr_matrix
    basis: SectorBasis

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    @cached_property
    def _complex_matrix(self) -> sp.csr_matrix:
        # scipy would otherwise upcast the real matrix on every product
        return self.matrix.astype(np.complex128)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(v):
            return self._complex_matrix @ v
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.toarray())


def _hop_matrix(masks: np.ndarray, L: int, J: float) -> sp.csr_matrix:
    """-J sum_j (a+_j a_j+1 + h.c.) on a single-component basis."""
    lookup = {int(m): i for i, m in enumerate(masks)}
    rows, cols, vals = [], [], []
    for col, m in enumerate(masks.tolist()):
        for j in range(L - 1):
            a, b = 1 << j, 1 << (j + 1)
            if bool(m & a) == bool(m & b):
                continue
            new = m ^ a ^ b
            src, dst = (j, j + 1) if m & a else (j + 1, j)
            # sign from modes strictly between source and target
            lo, hi = min(src, dst), max(src, dst)
            between = m & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
            sign = -1.0 if bin(between).count("1") % 2 else 1.0
            rows.append(lookup[new])
            cols.append(col)
            vals.append(-J * sign)
    n = len(masks)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diagonal_energies(basis: SectorBasis) -> np.ndarray:
    p = basis.params
    up = np.repeat(basis.up_masks, len(basis.dn_masks))
    dn = np.tile(basis.dn_masks, len(basis.up_masks))
    edge = (1 << (basis.L - 1)) - 1  # drop the wrap-around bit: open chain
    return (
        p.U * _popcount(up & dn)
        + p.V_upup * _popcount(up & (up >> 1) & edge)
        + p.V_dndn * _popcount(dn & (dn >> 1) & edge)
        + p.V_updn * (_popcount(up & (dn >> 1) & edge) + _popcount(dn & (up >> 1) & edge))
    ).astype(np.float64)


def build_fock_hamiltonian(basis: SectorBasis) -> SparseHamiltonian:
    p = basis.params
    n_u, n_d = len(basis.up_masks), len(basis.dn_masks)
    h_up = _hop_matrix(basis.up_masks, basis.L, p.J_up)
    h_dn = _hop_matrix(basis.dn_masks, basis.L, p.J_dn)
    H = (
        sp.kron(h_up, sp.identity(n_d), format="csr")
        + sp.kron(sp.identity(n_u), h_dn, format="csr")
        + sp.diags(diagonal_energies(basis), format="csr")
    )
    H.eliminate_zeros()
    H.sort_indices()
    return SparseHamiltonian(H.tocsr(), basis)


# ---------------------------------------------------------------------------
# qubit Hamiltonian
# ---------------------------------------------------------------------------


@dataclass
class PauliSum:
    n_qubits: int
    terms: list[tuple[float, str]] = field(default_factory=list)

    def add(self, coeff: float, ops: dict[int, str]):
        if coeff == 0.0:
            return
        label = ["I"] * self.n_qubits
        for q, op in ops.items():
            label[q] = op
        self.terms.append((float(coeff), "".join(label)))

    def __len__(self) -> int:
        return len(self.terms)

    def to_sparse(self) -> sp.csr_matrix:
        n = self.n_qubits
        dim = 1 << n
        idx = np.arange(dim, dtype=np.int64)
        out = sp.csr_matrix((dim, dim), dtype=np.complex128)
        for coeff, label in self.terms:
            xmask = zmask = 0
            ny = 0
            for q, op in enumerate(label):
                bit = 1 << (n - 1 - q)
                if op in "XY":
                    xmask |= bit
                if op in "ZY":
                    zmask |= bit
                ny += op == "Y"
            # P = i^ny X^x Z^z, P|b> = i^ny (-1)^{b.z} |b ^ x>
            phase = (1j**ny) * (1.0 - 2.0 * (_popcount(idx & zmask) % 2))
            out = out + sp.csr_matrix((coeff * phase, (idx ^ xmask, idx)), shape=(dim, dim))
        return out.tocsr()

    def restrict(self, basis: SectorBasis) -> np.ndarray:
        """Dense matrix of the operator on the sector's computational states."""
        sel = basis.qubit_indices
        return self.to_sparse()[sel][:, sel].toarray()


def jordan_wigner(params: ModelParams) -> PauliSum:
    """Qubit Hamiltonian H0 + H1 + H2 with constants and U-linear Z terms dropped."""
    L = params.L
    H = PauliSum(2 * L)
    for offset, J, V in ((0, params.J_up, params.V_upup), (L, params.J_dn, params.V_dndn)):
        for j in range(L - 1):
            a, b = offset + j, offset + j + 1
            H.add(J / 2, {a: "X", b: "X"})
            H.add(J / 2, {a: "Y", b: "Y"})
            H.add(V / 4, {a: "Z", b: "Z"})
    for j in range(L):
        H.add(params.U / 4, {j: "Z", L + j: "Z"})
    for offset, V in ((0, params.V_upup), (L, params.V_dndn)):
        for j in range(L):
            coeff = -V / 4 if j in (0, L - 1) else -V / 2
            H.add(coeff, {offset + j: "Z"})
    return H


def gauge_signs(basis: SectorBasis) -> np.ndarray:
    """Sublattice signs mapping the -J hopping convention to +J on an open chain.

    Multiplying amplitudes by ``(-1)^(number of particles on odd sites)`` flips
    the sign of every nearest-neighbour hop and leaves diagonal terms alone.
    """
    odd = np.arange(basis.L) % 2 == 1
    n_odd = basis.up_occupations[:, odd].sum(axis=1) + basis.dn_occupations[:, odd].sum(axis=1)
    return 1.0 - 2.0 * (n_odd % 2)


def sector_dimension(L: int, n_up: int, n_dn: int) -> int:
    return math.comb(L, n_up) * math.comb(L, n_dn)
