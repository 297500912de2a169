import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doublon_lab.circuit import Circuit, Counts, NoiseModel, cz, run, run_noisy, sample, u3, x, zero_state
from doublon_lab.exact import evolve, initial_state_walk, measure
from doublon_lab.mitigate import (
    FoldSpec,
    FullyFilteredError,
    MitigationConfig,
    MitigatedValue,
    estimate,
    expectation,
    fold,
    linear_weights,
    mitigate,
    mitigated_observable,
    post_select,
    richardson_weights,
    zne,
)
from doublon_lab.model import ModelParams, build_fock_hamiltonian, build_sector_basis
from doublon_lab.trotter import TrotterPlan, build_circuit

bitstrings6 = st.text(alphabet="01", min_size=6, max_size=6)
counts6 = st.dictionaries(bitstrings6, st.integers(1, 50), min_size=1, max_size=20).map(lambda d: Counts(6, d))


def small_trotter(t=0.3):
    return build_circuit(TrotterPlan(ModelParams.from_delta(3, 0.5, 4.0, 2.0), t))


@st.composite
def circuits(draw, n=4):
    gates = []
    for _ in range(draw(st.integers(1, 10))):
        if draw(st.booleans()):
            a, b = draw(st.permutations(range(n)))[:2]
            gates.append(cz(a, b))
        else:
            q = draw(st.integers(0, n - 1))
            gates.append(u3(q, *(draw(st.floats(-3, 3)) for _ in range(3))))
    return Circuit(n, gates)


# ---------------------------------------------------------------------------
# post-selection
# ---------------------------------------------------------------------------


def test_post_select_keeps_conserving_counts():
    c = sample(run(small_trotter(), zero_state(6)), 2000, seed=1)
    assert post_select(c, 2, 1) == c


def test_post_select_fully_filtered():
    with pytest.raises(FullyFilteredError):
        post_select(Counts(6, {"110000": 100}), 2, 1)


def test_post_select_needs_two_chains():
    with pytest.raises(ValueError):
        post_select(Counts(3, {"110": 1}), 1, 1)


def test_post_select_filters_by_both_halves():
    c = Counts(6, {"110100": 5, "110000": 3, "111100": 2, "011001": 7})
    kept = post_select(c, 2, 1)
    assert kept.counts == {"110100": 5, "011001": 7}
    assert kept.total_shots == 12


@settings(max_examples=50, deadline=None)
@given(c=counts6)
def test_post_select_idempotent(c):
    try:
        once = post_select(c, 2, 1)
    except FullyFilteredError:
        return
    assert post_select(once, 2, 1) == once
    assert once.total_shots <= c.total_shots


def test_noisy_retained_fraction_strictly_between():
    c = run_noisy(small_trotter(), zero_state(6), NoiseModel(0.001, 0.01, seed=3), 300, 10)
    frac = post_select(c, 2, 1).total_shots / c.total_shots
    assert 0 < frac < 1


def test_retained_fraction_decreases_with_scale():
    c = small_trotter(0.2)
    psi0 = zero_state(6)
    fracs, sig = [], []
    for k, lam in enumerate((1, 2, 3)):
        counts = run_noisy(fold(c, FoldSpec(lam)), psi0, NoiseModel(0.001, 0.05, seed=10 + k), 2000, 6)
        n = counts.total_shots
        f = post_select(counts, 2, 1).total_shots / n
        fracs.append(f)
        sig.append(np.sqrt(f * (1 - f) / n))
    for i in range(2):
        assert fracs[i] - fracs[i + 1] > 3 * np.hypot(sig[i], sig[i + 1])


# ---------------------------------------------------------------------------
# folding
# ---------------------------------------------------------------------------


def ten_cz():
    gates = []
    for k in range(10):
        gates += [u3(k % 4, 0.1 * k, 0.2, 0.3), cz(k % 4, (k + 1) % 4)]
    return Circuit(4, gates)


def test_fold_scale_one_is_identical():
    c = ten_cz()
    assert fold(c, FoldSpec(1)).gates == c.gates


def test_fold_scale_three_triples_two_qubit_gates():
    c = ten_cz()
    f = fold(c, FoldSpec(3))
    assert f.count("CZ") == 30
    assert f.count("U3") == c.count("U3")


def test_fold_scale_two_folds_first_half():
    c = ten_cz()
    f = fold(c, FoldSpec(2))
    # five folded gates contribute three CZ each, the other five one each
    assert f.count("CZ") == 5 * 3 + 5
    names = [g.name for g in f]
    first_u3_after_fold = [i for i, n in enumerate(names) if n == "U3"]
    assert names[first_u3_after_fold[0] + 1 : first_u3_after_fold[0] + 4] == ["CZ"] * 3
    assert names[-1] == "CZ" and names[-2] == "U3"


def test_fold_odd_count_rounds_up():
    assert sum(FoldSpec(2).folds_per_gate(7)) == 4
    assert FoldSpec(2.5).folds_per_gate(4) == [1, 1, 1, 0]
    assert FoldSpec(5).folds_per_gate(3) == [2, 2, 2]


def test_fold_rejects_small_scale():
    with pytest.raises(ValueError):
        FoldSpec(0.5)


def test_single_qubit_gates_are_never_folded():
    c = Circuit(2, [u3(0, 0.3, 0.1, 0.2), x(1), cz(0, 1)])
    assert [g.name for g in fold(c, FoldSpec(3))] == ["U3", "X", "CZ", "CZ", "CZ"]


@settings(max_examples=30, deadline=None)
@given(c=circuits(), lam=st.sampled_from([1, 2, 3, 2.5]), seed=st.integers(0, 100))
def test_fold_preserves_noiseless_state(c, lam, seed):
    rng = np.random.default_rng(seed)
    psi0 = rng.normal(size=16) + 1j * rng.normal(size=16)
    psi0 /= np.linalg.norm(psi0)
    a, b = run(c, psi0), run(fold(c, FoldSpec(lam)), psi0)
    assert abs(abs(np.vdot(a, b)) ** 2 - 1) < 1e-10


def test_fold_preserves_trotter_unitary():
    c = small_trotter(0.2)
    for lam in (2, 3):
        U, V = c.unitary(), fold(c, FoldSpec(lam)).unitary()
        assert np.abs(U - V).max() < 1e-10


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def test_expectation_single_bitstrings():
    # L=7: up on 2,3 and down on 4
    c = Counts(14, {"00110000000100": 10})
    assert expectation(c, "p_upup") == 1.0
    assert expectation(c, "p_updn") == 0.0
    assert expectation(c, "density_4") == 1.0
    d = Counts(14, {"00001000000100": 3})
    assert expectation(d, "p_updn") >= 1.0
    assert expectation(d, ("corr_updn", 4, 4)) == 1.0
    assert expectation(c, ("corr_up", 2, 3)) == 1.0
    assert expectation(c, ("corr_up", 2, 2)) == 0.0
    assert expectation(c, ("density", 3)) == 1.0


def test_expectation_errors():
    with pytest.raises(ValueError):
        expectation(Counts(6), "p_updn")
    c = Counts(6, {"110100": 1})
    for bad in ("energy", "density_x", ("spin", 1)):
        with pytest.raises(ValueError):
            expectation(c, bad)


def test_sampled_estimate_within_three_sigma():
    p = ModelParams.from_delta(7, 0.2, 10.0, 10.0)
    b = build_sector_basis(p, 2, 1)
    psi = evolve(build_fock_hamiltonian(b), initial_state_walk(b), 1.6)
    ref = measure(psi, b)
    # sample sector amplitudes as 14-bit strings
    prob = np.abs(psi) ** 2
    rng = np.random.default_rng(8)
    draws = rng.multinomial(6000, prob / prob.sum())
    L = 7
    counts = {}
    for k in np.flatnonzero(draws):
        s = b.state(k)
        bits = "".join(str((s.up_occ >> i) & 1) for i in range(L)) + "".join(str((s.dn_occ >> i) & 1) for i in range(L))
        counts[bits] = int(draws[k])
    est = estimate(Counts(14, counts))
    for name in ("p_updn", "p_upup"):
        v = getattr(ref, name)
        assert abs(getattr(est, name) - v) <= 3 * np.sqrt(v * (1 - v) / 6000) + 1e-12


# ---------------------------------------------------------------------------
# extrapolation
# ---------------------------------------------------------------------------


def test_zne_examples():
    assert zne([(1, 0.4), (2, 0.4), (3, 0.4)]).value == pytest.approx(0.4, abs=1e-15)
    assert zne([(1, 3), (2, 5), (3, 7)]).value == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(richardson_weights([1, 2, 3]), [3, -3, 1])
    a, b, c = 0.83, 0.21, 0.017
    est = zne([(s, a - b * s + c * s * s) for s in (1, 2, 3)])
    assert est.value == pytest.approx(a, abs=1e-12)
    assert est.order == 2


def test_zne_errors():
    with pytest.raises(ValueError):
        zne([(1, 0.1), (1, 0.2)])
    with pytest.raises(ValueError):
        zne([(1, 0.1)])
    with pytest.raises(ValueError):
        zne([(1, 0.1), (2, 0.2)], method="exponential")


@settings(max_examples=50, deadline=None)
@given(
    scales=st.lists(st.floats(1.0, 6.0), min_size=2, max_size=5, unique=True).filter(
        lambda s: min(abs(a - b) for i, a in enumerate(s) for b in s[i + 1 :]) > 0.2
    ),
    data=st.data(),
)
def test_richardson_exact_below_degree_m(scales, data):
    m = len(scales)
    coeffs = data.draw(st.lists(st.floats(-2, 2), min_size=m, max_size=m))
    poly = np.polynomial.Polynomial(coeffs)
    est = zne([(s, poly(s)) for s in scales])
    assert est.value == pytest.approx(coeffs[0], abs=1e-8 * (1 + sum(abs(c) for c in coeffs)) * 6.0**m)


def test_linear_fit_weights():
    w = linear_weights([1, 2, 3])
    np.testing.assert_allclose(w, [4 / 3, 1 / 3, -2 / 3])
    est = zne([(1, 3.1), (2, 5.0), (3, 6.9)], method="linear")
    assert est.value == pytest.approx(1.2)
    assert est.order == 1


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def test_config_validation():
    assert MitigationConfig(shots=500).trajectories == 500
    with pytest.raises(ValueError):
        MitigationConfig(shots=1000, trajectories=300)
    with pytest.raises(ValueError):
        MitigationConfig(scales=(1, 1))
    with pytest.raises(ValueError):
        MitigationConfig(extrapolation="cubic")


def test_noiseless_pipeline_series_agree():
    c = small_trotter()
    cfg = MitigationConfig(shots=3000, trajectories=100, seed=4)
    v = mitigated_observable(c, zero_state(6), NoiseModel(0.0, 0.0), "p_updn", cfg)
    assert v.raw == v.post_selected
    assert all(row[3] == 1.0 for row in v.rows)
    exact = estimate(sample(run(c, zero_state(6)), 3000, seed=0)).p_updn
    # ZNE of three independent noiseless estimates: same mean, weights 3, -3, 1
    sigma = np.sqrt(exact * (1 - exact) / 3000)
    assert abs(v.zne - v.raw) < 5 * np.sqrt(19) * sigma + 1e-12


def test_pipeline_is_deterministic_and_reports_all_lambdas(tmp_path):
    c = small_trotter()
    cfg = MitigationConfig(shots=1200, trajectories=120, seed=2)
    nm = NoiseModel(0.001, 0.05, seed=0)
    r1 = mitigate(c, zero_state(6), nm, cfg)
    r2 = mitigate(c, zero_state(6), nm, cfg)
    assert [r.counts for r in r1.runs] == [r.counts for r in r2.runs]
    assert [r.scale for r in r1.runs] == [1.0, 2.0, 3.0]
    v = r1.value("p_updn")
    w = richardson_weights([1, 2, 3])
    assert v.zne == pytest.approx(float(w @ [row[2] for row in v.rows]))
    v.write_csv(tmp_path / "m.csv")
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["lambda", "raw", "post_selected", "retained_fraction"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "0"]


def test_pipeline_fully_filtered_signal():
    # every X lands the register outside the (2, 1) sector
    c = Circuit(6, [x(0)])
    with pytest.raises(FullyFilteredError):
        mitigate(c, zero_state(6), NoiseModel(0.0, 0.0), MitigationConfig(shots=100, trajectories=10))


def test_zne_clamped_field():
    v = MitigatedValue("p_updn", 0.9, 0.95, 1.02, bound=1.0)
    assert v.zne == 1.02 and v.zne_clamped == 1.0
    assert MitigatedValue("p_upup", 0.1, 0.05, -0.01, bound=1.0).zne_clamped == 0.0
