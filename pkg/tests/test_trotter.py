import time

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import expm_multiply

from doublon_lab.circuit import Circuit, computational_state, run, sample, zero_state
from doublon_lab.exact import embed_in_qubits, evolve, initial_state_walk, measure, phase_aligned_distance
from doublon_lab.mitigate import estimate
from doublon_lab.model import ModelParams, PauliSum, build_fock_hamiltonian, build_sector_basis, jordan_wigner
from doublon_lab.trotter import (
    TrotterPlan,
    bond_gate,
    build_circuit,
    build_step,
    initial_bits,
    preparation,
    z_phase,
)

X = np.array([[0, 1], [1, 0]])
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0])


def seq_unitary(gates, n=2):
    return Circuit(n, list(gates)).unitary()


def op_distance(A, B):
    """Operator-norm distance minimized over a global phase."""
    tr = np.trace(B.conj().T @ A)
    phase = tr / abs(tr) if abs(tr) > 1e-12 else 1.0
    return np.linalg.norm(A - phase * B, 2)


def layer_hamiltonians(p, grouping):
    """Qubit Hamiltonians of the three commuting groups: even bonds, odd bonds, diagonal."""
    L = p.L
    G = [PauliSum(2 * L) for _ in range(3)]
    for off, J, V in ((0, p.J_up, p.V_upup), (L, p.J_dn, p.V_dndn)):
        for j in range(L - 1):
            g = G[j % 2]
            g.add(J / 2, {off + j: "X", off + j + 1: "X"})
            g.add(J / 2, {off + j: "Y", off + j + 1: "Y"})
            (g if grouping == "bond" else G[2]).add(V / 4, {off + j: "Z", off + j + 1: "Z"})
            for q in (off + j, off + j + 1):
                G[2].add(-V / 4, {q: "Z"})
    for j in range(L):
        G[2].add(p.U / 4, {j: "Z", L + j: "Z"})
    return [g.to_sparse() for g in G]


@pytest.fixture(scope="module")
def walk7():
    p = ModelParams.from_delta(7, 0.2, 10.0, 10.0)
    b = build_sector_basis(p, 2, 1)
    return p, b, build_fock_hamiltonian(b), initial_state_walk(b)


# ---------------------------------------------------------------------------
# bond gate
# ---------------------------------------------------------------------------


def test_bond_gate_trivial_is_identity():
    assert op_distance(seq_unitary(bond_gate(0.0, 0.0, 0.1)), np.eye(4)) < 1e-12


@pytest.mark.parametrize("J,V,dt", [(1.0, 10.0, 0.1), (0.2, 10.0, 0.1), (1.0, 0.0, 0.37), (0.5, -3.0, 1.3)])
def test_bond_gate_matches_expm(J, V, dt):
    H = J / 2 * (np.kron(X, X) + np.kron(Y, Y)) + V / 4 * np.kron(Z, Z)
    gates = bond_gate(J, V, dt)
    assert sum(len(g.qubits) == 2 for g in gates) <= 3
    assert op_distance(seq_unitary(gates), sla.expm(-1j * dt * H)) < 1e-10


def test_bond_gate_full_transfer():
    U = seq_unitary(bond_gate(1.0, 0.0, np.pi / 2))
    assert abs(U[2, 1]) == pytest.approx(1.0, abs=1e-12)
    assert abs(U[1, 2]) == pytest.approx(1.0, abs=1e-12)


def test_bond_gate_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        bond_gate(1.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# step structure
# ---------------------------------------------------------------------------


def _count(c, name, pairs=None):
    return sum(g.name == name and (pairs is None or pairs(g.qubits)) for g in c)


def test_step_block_counts_L7():
    p = ModelParams.from_delta(7, 0.2, 10.0, 10.0)
    for grouping in ("bond", "diagonal"):
        c = build_step(p, 0.1, grouping)
        assert c.count("CNOT") == 3 * 12
        assert _count(c, "RZZ", lambda q: abs(q[0] - q[1]) == 7) == 7
        names = [g.name for g in c]
        tail = len(names) - max(i for i, n in enumerate(names) if n != "RZ") - 1
        assert tail == 14
    assert build_step(p, 0.1, "diagonal").count("RZZ") == 7 + 12


def test_step_without_U_has_no_B_layer():
    c = build_step(ModelParams.from_delta(5, 0.5, 0.0, 10.0), 0.1, "bond")
    assert c.count("RZZ") == 0


def test_step_layer_order():
    p = ModelParams.from_delta(5, 0.5, 4.0, 2.0)
    names = [g.name for g in build_step(p, 0.1, "bond")]
    last_cnot = max(i for i, n in enumerate(names) if n == "CNOT")
    first_rzz = names.index("RZZ")
    assert last_cnot < first_rzz
    assert all(n == "RZ" for n in names[names.index("RZZ") + 5 :])
    assert TrotterPlan(p, 1.0, grouping="bond").layers == ("A_even", "A_odd", "B", "C")
    assert TrotterPlan(p, 1.0).layers == ("A_even", "A_odd", "V", "B", "C")


def test_z_phases():
    p = ModelParams(L=5, J_up=1.0, J_dn=0.5, U=1.0, V_upup=4.0, V_dndn=2.0)
    assert z_phase(p, 0, 0.1) == pytest.approx(0.1)
    assert z_phase(p, 2, 0.1) == pytest.approx(0.2)
    assert z_phase(p, 9, 0.1) == pytest.approx(0.05)


def test_unknown_grouping():
    with pytest.raises(ValueError):
        build_step(ModelParams(3), 0.1, "commutator")
    with pytest.raises(ValueError):
        TrotterPlan(ModelParams(3), 1.0, grouping="nope")


@pytest.mark.parametrize("grouping", ["bond", "diagonal"])
@pytest.mark.parametrize("L", [2, 3])
def test_step_is_product_of_layer_exponentials_dense(L, grouping):
    p = ModelParams(L=L, J_up=1.0, J_dn=0.3, U=7.0, V_upup=5.0, V_dndn=2.0)
    dt = 0.13
    Gs = [g.toarray() for g in layer_hamiltonians(p, grouping)]
    ref = sla.expm(-1j * dt * Gs[2]) @ sla.expm(-1j * dt * Gs[1]) @ sla.expm(-1j * dt * Gs[0])
    assert op_distance(build_step(p, dt, grouping).unitary(), ref) < 1e-10


def test_layer_hamiltonians_sum_to_jw():
    p = ModelParams.from_delta(4, 0.4, 3.0, 2.0)
    for grouping in ("bond", "diagonal"):
        total = sum(layer_hamiltonians(p, grouping))
        assert abs(total - jordan_wigner(p).to_sparse()).max() < 1e-12


@pytest.mark.parametrize("grouping", ["bond", "diagonal"])
def test_step_is_product_of_layer_exponentials_L7(walk7, grouping):
    p, _, _, _ = walk7
    psi = run(preparation(7), zero_state(14))
    dt = 0.1
    prod = psi
    for g in layer_hamiltonians(p, grouping):
        prod = expm_multiply(-1j * dt * g, prod)
    assert phase_aligned_distance(run(build_step(p, dt, grouping), psi), prod) < 1e-10


@pytest.mark.parametrize("grouping", ["bond", "diagonal"])
def test_single_step_error_is_the_commutator_term(walk7, grouping):
    # leading error of e^{-iC dt} e^{-iB dt} e^{-iA dt} is dt^2/2 * sum_{i<j} [G_j, G_i]
    p, _, _, _ = walk7
    psi = run(preparation(7), zero_state(14))
    H = jordan_wigner(p).to_sparse()
    Gs = layer_hamiltonians(p, grouping)
    comm = sum(Gs[j] @ Gs[i] - Gs[i] @ Gs[j] for i in range(3) for j in range(i + 1, 3))
    errs = []
    for dt in (0.1, 0.05):
        err = phase_aligned_distance(run(build_step(p, dt, grouping), psi), expm_multiply(-1j * dt * H, psi))
        est = dt**2 / 2 * np.linalg.norm(comm @ psi)
        assert err == pytest.approx(est, rel=0.1)
        errs.append(err)
    assert errs[0] / errs[1] == pytest.approx(4.0, abs=0.3)


@pytest.mark.xfail(strict=True, reason="first-order step error at dt=0.1, U=V=10 is about 0.05; see ledger")
def test_single_step_error_below_5e3(walk7):
    p, b, H, psi0 = walk7
    ex = embed_in_qubits(evolve(H, psi0, 0.1, "dense"), b)
    tro = run(build_step(p, 0.1), run(preparation(7), zero_state(14)))
    assert phase_aligned_distance(tro, ex) < 5e-3


# ---------------------------------------------------------------------------
# full circuits
# ---------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(t=st.floats(0.0, 5.0), dt=st.floats(0.01, 0.5))
def test_plan_steps_cover_t(t, dt):
    plan = TrotterPlan(ModelParams(3), t, dt)
    assert abs(plan.n_steps * plan.dt - t) < 1e-12
    assert plan.dt <= dt + 1e-12


def test_t16_has_16_steps():
    assert TrotterPlan(ModelParams(7), 1.6).n_steps == 16


def test_zero_steps_is_preparation_only():
    c = build_circuit(TrotterPlan(ModelParams(7), 0.0))
    assert {g.name for g in c} == {"X"}
    counts = sample(run(c, zero_state(14)), 100, seed=0)
    assert counts.counts == {initial_bits(7, "walk"): 100}
    assert initial_bits(7, "walk") == "00110000000100"
    assert initial_bits(7, "dissoc") == "00101000000100"


def test_preparation_matches_exact_embedding(walk7):
    _, b, _, psi0 = walk7
    np.testing.assert_array_equal(run(preparation(7), zero_state(14)), embed_in_qubits(psi0, b, gauge=False))


def test_circuit_text_export():
    c = build_circuit(TrotterPlan(ModelParams.from_delta(3, 0.5, 2.0, 1.0), 0.2))
    text = c.to_text()
    assert text.splitlines()[0].startswith("X ")
    assert Circuit.from_text(6, text).gates == c.gates


def test_first_order_convergence(walk7):
    p, b, H, psi0 = walk7
    ex = embed_in_qubits(evolve(H, psi0, 1.0, "dense"), b)
    d = [phase_aligned_distance(run(build_circuit(TrotterPlan(p, 1.0, dt)), zero_state(14)), ex) for dt in (0.1, 0.05)]
    assert d[0] / d[1] == pytest.approx(2.0, abs=0.3)


def test_walk_p_updn_from_sampling(walk7):
    p, b, H, psi0 = walk7
    exact = measure(evolve(H, psi0, 1.6), b).p_updn
    t0 = time.perf_counter()
    psi = run(build_circuit(TrotterPlan(p, 1.6)), zero_state(14))
    rec = estimate(sample(psi, 6000, seed=4))
    assert time.perf_counter() - t0 < 10
    assert abs(rec.p_updn - exact) < 0.05


@settings(max_examples=10, deadline=None)
@given(
    delta=st.floats(0.0, 2.0),
    U=st.floats(-10.0, 20.0),
    V=st.floats(-10.0, 20.0),
    t=st.floats(0.05, 0.6),
    seed=st.integers(0, 2**16),
)
def test_trotter_conserves_both_numbers(delta, U, V, t, seed):
    p = ModelParams.from_delta(5, delta, U, V)
    c = build_circuit(TrotterPlan(p, t), initial="walk")
    counts = sample(run(c, zero_state(10)), 500, seed=seed)
    assert all(b[:5].count("1") == 2 and b[5:].count("1") == 1 for b in counts.counts)


def test_trotter_state_stays_in_sector():
    p = ModelParams.from_delta(5, 0.7, 10.0, 10.0)
    psi = run(build_circuit(TrotterPlan(p, 0.5), initial="dissoc"), zero_state(10))
    b = build_sector_basis(p, 2, 1)
    assert np.sum(np.abs(psi[b.qubit_indices]) ** 2) == pytest.approx(1.0, abs=1e-12)
    assert computational_state(initial_bits(5, "dissoc")).size == 1 << 10
