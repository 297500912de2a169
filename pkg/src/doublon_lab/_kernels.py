"""numba kernels for layers of single-qubit gates (qubit 0 = most significant bit)."""

from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def apply_1q_layer(psi, n, mats):
    """psi <- (mats[0] x ... x mats[n-1]) psi, in place."""
    N = psi.size
    for q in range(n):
        stride = 1 << (n - 1 - q)
        m00, m01, m10, m11 = mats[q, 0, 0], mats[q, 0, 1], mats[q, 1, 0], mats[q, 1, 1]
        for base in range(0, N, 2 * stride):
            for k in range(base, base + stride):
                a = psi[k]
                b = psi[k + stride]
                psi[k] = m00 * a + m01 * b
                psi[k + stride] = m10 * a + m11 * b


@numba.njit(cache=True)
def backprop_1q_layer(phi, lam, n, mats, M):
    """Undo a layer on both the state ``phi`` and the costate ``lam``.

    On return ``M[q, a, b] = sum conj(lam_after[.., a, ..]) * phi_before[.., b, ..]``
    for the gate on qubit ``q``, which is all a gradient with respect to that
    gate's matrix needs.
    """
    N = phi.size
    for q in range(n - 1, -1, -1):
        stride = 1 << (n - 1 - q)
        # adjoint of the gate
        d00 = np.conj(mats[q, 0, 0])
        d01 = np.conj(mats[q, 1, 0])
        d10 = np.conj(mats[q, 0, 1])
        d11 = np.conj(mats[q, 1, 1])
        s00 = 0j
        s01 = 0j
        s10 = 0j
        s11 = 0j
        for base in range(0, N, 2 * stride):
            for k in range(base, base + stride):
                pa = phi[k]
                pb = phi[k + stride]
                p0 = d00 * pa + d01 * pb
                p1 = d10 * pa + d11 * pb
                la = lam[k]
                lb = lam[k + stride]
                cla = np.conj(la)
                clb = np.conj(lb)
                s00 += cla * p0
                s01 += cla * p1
                s10 += clb * p0
                s11 += clb * p1
                phi[k] = p0
                phi[k + stride] = p1
                lam[k] = d00 * la + d01 * lb
                lam[k + stride] = d10 * la + d11 * lb
        M[q, 0, 0] = s00
        M[q, 0, 1] = s01
        M[q, 1, 0] = s10
        M[q, 1, 1] = s11


# gate program opcodes
OP_1Q = 0
OP_2Q = 1
OP_DIAG2 = 2


@numba.njit(cache=True, nogil=True)
def _apply_1q(psi, n, q, m00, m01, m10, m11):
    N = psi.size
    stride = 1 << (n - 1 - q)
    for base in range(0, N, 2 * stride):
        for k in range(base, base + stride):
            a = psi[k]
            b = psi[k + stride]
            psi[k] = m00 * a + m01 * b
            psi[k + stride] = m10 * a + m11 * b


@numba.njit(cache=True, nogil=True)
def run_program(psi, n, ops, qa, qb, mats, start, stop, f_gate, f_qubit, f_mats):
    """Apply gates ``start..stop-1`` of a compiled program in place.

    ``mats[k]`` holds the 2x2 (top-left block), 4x4 or diagonal (first row)
    matrix of gate ``k``; for two-qubit gates ``qa[k]`` is the high index bit.
    After gate ``f_gate[i]`` the 2x2 matrix ``f_mats[i]`` hits qubit
    ``f_qubit[i]``; ``f_gate`` must be sorted.
    """
    N = psi.size
    fi = 0
    while fi < f_gate.size and f_gate[fi] < start:
        fi += 1
    for k in range(start, stop):
        op = ops[k]
        m = mats[k]
        if op == OP_1Q:
            _apply_1q(psi, n, qa[k], m[0, 0], m[0, 1], m[1, 0], m[1, 1])
        else:
            sa = 1 << (n - 1 - qa[k])
            sb = 1 << (n - 1 - qb[k])
            for i in range(N):
                if i & sa or i & sb:
                    continue
                i01 = i | sb
                i10 = i | sa
                i11 = i10 | sb
                if op == OP_DIAG2:
                    psi[i] *= m[0, 0]
                    psi[i01] *= m[0, 1]
                    psi[i10] *= m[0, 2]
                    psi[i11] *= m[0, 3]
                else:
                    a0 = psi[i]
                    a1 = psi[i01]
                    a2 = psi[i10]
                    a3 = psi[i11]
                    psi[i] = m[0, 0] * a0 + m[0, 1] * a1 + m[0, 2] * a2 + m[0, 3] * a3
                    psi[i01] = m[1, 0] * a0 + m[1, 1] * a1 + m[1, 2] * a2 + m[1, 3] * a3
                    psi[i10] = m[2, 0] * a0 + m[2, 1] * a1 + m[2, 2] * a2 + m[2, 3] * a3
                    psi[i11] = m[3, 0] * a0 + m[3, 1] * a1 + m[3, 2] * a2 + m[3, 3] * a3
        while fi < f_gate.size and f_gate[fi] == k:
            f = f_mats[fi]
            _apply_1q(psi, n, f_qubit[fi], f[0, 0], f[0, 1], f[1, 0], f[1, 1])
            fi += 1
