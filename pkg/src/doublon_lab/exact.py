"""Sector-restricted time evolution and pair observables.

State vectors here are plain complex numpy arrays indexed by a
:class:`~doublon_lab.model.SectorBasis`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.blas import dznrm2, zaxpy, zdotc

from .model import ParameterError, SectorBasis, SparseHamiltonian, center_site, gauge_signs

log = logging.getLogger(__name__)

KRYLOV_DT = 0.05
KRYLOV_TOL = 1e-12
KRYLOV_MAX_DIM = 60
DENSE_MAX_DIM = 4000


class KrylovConvergenceError(RuntimeError):
    def __init__(self, step: int, residual: float):
        super().__init__(f"Lanczos step {step} did not converge (residual estimate {residual:.3e})")
        self.step = step
        self.residual = residual


def basis_state(basis: SectorBasis, up_sites: Iterable[int], dn_sites: Iterable[int]) -> np.ndarray:
    up = sum(1 << i for i in up_sites)
    dn = sum(1 << i for i in dn_sites)
    psi = np.zeros(basis.dim, dtype=np.complex128)
    psi[basis.index((up, dn))] = 1.0
    return psi


def _check_three_particles(basis: SectorBasis):
    if (basis.n_up, basis.n_dn) != (2, 1):
        raise ParameterError(f"initial state needs sector (2, 1), got ({basis.n_up}, {basis.n_dn})")
    if basis.L < 5:
        raise ParameterError("initial states need L >= 5")


def walk_sites(L: int) -> tuple[list[int], list[int]]:
    """Up at labels -1, 0 and down at +1."""
    return [center_site(L, -1), center_site(L, 0)], [center_site(L, 1)]


def dissoc_sites(L: int) -> tuple[list[int], list[int]]:
    """Up at labels -1, +1 and down at +1: a doublon next to a free up particle."""
    return [center_site(L, -1), center_site(L, 1)], [center_site(L, 1)]


INITIAL_STATES = {"walk": walk_sites, "dissoc": dissoc_sites}


def initial_state_walk(basis: SectorBasis) -> np.ndarray:
    _check_three_particles(basis)
    return basis_state(basis, *walk_sites(basis.L))


def initial_state_dissoc(basis: SectorBasis) -> np.ndarray:
    _check_three_particles(basis)
    return basis_state(basis, *dissoc_sites(basis.L))


def initial_state(basis: SectorBasis, kind: str) -> np.ndarray:
    if kind not in INITIAL_STATES:
        raise ValueError(f"unknown initial state {kind!r}; choose from {sorted(INITIAL_STATES)}")
    return {"walk": initial_state_walk, "dissoc": initial_state_dissoc}[kind](basis)


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------


def _lanczos_expm(matvec, v: np.ndarray, tau: float, tol: float, max_dim: int, step: int = 0) -> np.ndarray:
    """exp(-i tau H) v on a Lanczos subspace grown until the tail weight drops below ``tol``."""
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return v.copy()
    Q = [v / beta0]
    alpha, beta = [], []
    err = np.inf
    for j in range(max_dim):
        w = matvec(Q[j])
        alpha.append(np.vdot(Q[j], w).real)
        # modified Gram-Schmidt against the whole basis, in place
        for q in Q:
            zaxpy(q, w, a=-zdotc(q, w))
        b = dznrm2(w)
        if j:
            evals, evecs = eigh_tridiagonal(np.array(alpha), np.array(beta))
        else:
            evals, evecs = np.array(alpha), np.ones((1, 1))
        y = evecs @ (np.exp(-1j * tau * evals) * evecs[0])
        err = b * abs(y[-1])
        if err < tol or b < 1e-14:
            out = y[0] * Q[0]
            for c, q in zip(y[1:], Q[1:]):
                zaxpy(q, out, a=c)
            return beta0 * out
        beta.append(b)
        w *= 1.0 / b
        Q.append(w)
    raise KrylovConvergenceError(step, err)


def evolve(
    H: SparseHamiltonian,
    psi0: np.ndarray,
    t: float,
    method: str = "krylov",
    *,
    krylov_dt: float = KRYLOV_DT,
    tol: float = KRYLOV_TOL,
) -> np.ndarray:
    """Return exp(-iHt) psi0.

    ``method="dense"`` diagonalises the full sector matrix; ``"krylov"`` takes
    outer steps of ``krylov_dt`` with an adaptive Lanczos subspace. Negative
    ``t`` runs the evolution backwards.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (H.dim,):
        raise ValueError(f"state has shape {psi0.shape}, Hamiltonian has dim {H.dim}")
    if t == 0:
        return psi0.copy()
    if method == "dense":
        if H.dim > DENSE_MAX_DIM:
            raise ValueError(f"dense evolution limited to dim <= {DENSE_MAX_DIM}, got {H.dim}")
        evals, evecs = H.eigh
        return evecs @ (np.exp(-1j * evals * t) * (evecs.conj().T @ psi0))
    if method != "krylov":
        raise ValueError(f"unknown method {method!r}")
    n = max(1, int(np.ceil(abs(t) / krylov_dt - 1e-9)))
    tau = t / n
    psi = psi0
    for k in range(n):
        psi = _lanczos_expm(H.matvec, psi, tau, tol, KRYLOV_MAX_DIM, step=k)
    return psi


def evolve_grid(
    H: SparseHamiltonian, psi0: np.ndarray, times: Iterable[float], method: str = "krylov", **kw
) -> Iterator[tuple[float, np.ndarray]]:
    """Yield (t, psi(t)) for increasing ``times``, evolving incrementally."""
    psi, t_prev = np.asarray(psi0, dtype=np.complex128), 0.0
    for t in times:
        if t < t_prev - 1e-12:
            raise ValueError("times must be non-decreasing")
        psi = evolve(H, psi, t - t_prev, method, **kw)
        t_prev = t
        yield t, psi


def energy(H: SparseHamiltonian, psi: np.ndarray) -> float:
    return float(np.vdot(psi, H.matvec(psi)).real)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


@dataclass
class ObservableRecord:
    t: float
    p_updn: float
    p_upup: float
    density: np.ndarray
    corr_updn: np.ndarray
    corr_up: np.ndarray

    def row(self) -> list[float]:
        return [self.t, self.p_updn, self.p_upup, *self.density.tolist()]


def observables_from_probabilities(
    prob: np.ndarray, up_occ: np.ndarray, dn_occ: np.ndarray, t: float = 0.0
) -> ObservableRecord:
    """Diagonal observables from basis-state weights and their occupation rows."""
    weighted_up = up_occ * prob[:, None]
    corr_updn = weighted_up.T @ dn_occ
    corr_up = weighted_up.T @ up_occ
    np.fill_diagonal(corr_up, 0.0)
    density = prob @ up_occ + prob @ dn_occ
    return ObservableRecord(
        t=float(t),
        p_updn=float(np.trace(corr_updn)),
        p_upup=float(np.trace(corr_up, offset=1)),
        density=density,
        corr_updn=corr_updn,
        corr_up=corr_up,
    )


def measure(psi: np.ndarray, basis: SectorBasis, t: float = 0.0) -> ObservableRecord:
    prob = np.abs(psi) ** 2
    return observables_from_probabilities(prob, basis.up_occupations, basis.dn_occupations, t)


def fmt(x: float) -> str:
    return f"{x:.12g}"


def write_records_csv(path: str | Path, records: list[ObservableRecord]):
    L = len(records[0].density) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "p_updn", "p_upup", *[f"n_{i}" for i in range(L)]])
        for rec in records:
            w.writerow([fmt(x) for x in rec.row()])


def write_matrix_csv(path: str | Path, matrix: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for (i, j), v in np.ndenumerate(matrix):
            w.writerow([i, j, fmt(v)])


def embed_in_qubits(psi: np.ndarray, basis: SectorBasis, gauge: bool = True) -> np.ndarray:
    """Sector state as a 2L-qubit statevector.

    With ``gauge`` the amplitudes pick up the sublattice signs relating the
    -J hopping of the Fock Hamiltonian to the +J hopping of the qubit one.
    """
    out = np.zeros(1 << (2 * basis.L), dtype=np.complex128)
    out[basis.qubit_indices] = psi * gauge_signs(basis) if gauge else psi
    return out


def phase_aligned_distance(a: np.ndarray, b: np.ndarray) -> float:
    """min over global phase of ||a - e^{i phi} b|| for unit vectors."""
    ov = np.vdot(b, a)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b))
