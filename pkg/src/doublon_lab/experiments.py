"""Experiment runner: sweeps over engines, CSV assembly and plot scripts."""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import circuit as qc
from .config import ExperimentConfig
from .exact import ObservableRecord, evolve_grid, fmt, initial_state, measure, observables_from_probabilities, write_matrix_csv
from .mitigate import FullyFilteredError, MitigationConfig, estimate, mitigate, post_select
from .model import ModelParams, build_fock_hamiltonian, build_sector_basis
from .recompile import Ansatz, RecompileResult, config_hash, optimize
from .trotter import TrotterPlan, build_circuit, initial_bits, preparation

log = logging.getLogger(__name__)

N_UP, N_DN = 2, 1
MITIGATED_OBSERVABLES = ("p_updn", "p_upup")


@dataclass
class Point:
    """One value of the swept parameter; all times of the config are evaluated for it."""

    index: int
    delta: float
    U: float

    def params(self, cfg: ExperimentConfig) -> ModelParams:
        m = cfg.model
        return ModelParams.from_delta(m.L, self.delta, self.U, m.V, J_up=m.J_up)


@dataclass
class PointResult:
    point: Point
    # (t, series, record) in output order
    records: list[tuple[float, str, ObservableRecord]] = field(default_factory=list)


def points(cfg: ExperimentConfig) -> list[Point]:
    m = cfg.model
    if cfg.experiment == "correlations":
        return [Point(0, m.delta, m.U)]
    if cfg.swept == "U":
        return [Point(k, m.delta, u) for k, u in enumerate(cfg.grid())]
    return [Point(k, d, m.U) for k, d in enumerate(cfg.grid())]


def point_seed(cfg: ExperimentConfig, point: Point, time_index: int) -> int:
    """Seed of one (point, time) cell; independent of worker scheduling."""
    return int(np.random.SeedSequence([cfg.seed, point.index, time_index]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _register_bits(n_qubits: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    return ((idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))) & 1).astype(np.float64)


def qubit_record(psi: np.ndarray, L: int, t: float) -> ObservableRecord:
    """Observables of a 2L-qubit state from its full computational-basis distribution."""
    bits = _register_bits(2 * L)
    prob = np.abs(psi) ** 2
    keep = prob > 1e-15
    return observables_from_probabilities(prob[keep], bits[keep, :L], bits[keep, L:], t)


def _with_time(rec: ObservableRecord, t: float) -> ObservableRecord:
    rec.t = float(t)
    return rec


def exact_records(params: ModelParams, initial: str, times: list[float]) -> list[ObservableRecord]:
    basis = build_sector_basis(params, N_UP, N_DN)
    H = build_fock_hamiltonian(basis)
    psi0 = initial_state(basis, initial)
    return [measure(psi, basis, t) for t, psi in evolve_grid(H, psi0, times)]


def trotter_state(cfg: ExperimentConfig, params: ModelParams, t: float) -> np.ndarray:
    c = cfg.circuit
    plan = TrotterPlan(params, t, c.dt, c.grouping)
    return qc.run(build_circuit(plan, with_init=False), qc.computational_state(initial_bits(params.L, cfg.model.initial)))


def compile_key(cfg: ExperimentConfig, params: ModelParams, chain: list[float], seed: int) -> dict:
    """Everything a compiled circuit depends on; ``chain`` lists the warm-start times ending at t."""
    c = cfg.circuit
    return {
        "params": params.to_dict(),
        "initial": cfg.model.initial,
        "chain": list(chain),
        "dt": c.dt,
        "grouping": c.grouping,
        "n_rounds": c.n_rounds,
        "pattern": c.pattern,
        "budget": c.budget,
        "restarts": c.restarts,
        "accept": c.accept,
        "seed": seed,
    }


def recompile_point(
    cfg: ExperimentConfig,
    params: ModelParams,
    chain: list[float],
    seed: int,
    out: Path | None,
    warm: np.ndarray | None = None,
) -> tuple[Ansatz, RecompileResult]:
    """Compile (or reload from a JSON sidecar) the ansatz reproducing the Trotter state at ``chain[-1]``.

    ``warm`` is the solution at the previous time of the chain.
    """
    c = cfg.circuit
    t = chain[-1]
    ansatz = Ansatz.for_chain(params.L, c.n_rounds, c.pattern)
    key = compile_key(cfg, params, chain, seed)
    h = config_hash(key)
    sidecar = out / "compiled" / f"{h}.json" if out is not None else None
    if sidecar is not None and sidecar.exists():
        return ansatz, RecompileResult.load(sidecar, h)
    psi0 = qc.computational_state(initial_bits(params.L, cfg.model.initial))
    target = trotter_state(cfg, params, t)
    res = optimize(ansatz, target, psi0, budget=c.budget, seed=seed, restarts=c.restarts, t=t, accept=c.accept, theta0=warm)
    log.info("compiled t=%g delta=%g U=%g: F=%.6f", t, params.delta, params.U, res.fidelity)
    if sidecar is not None:
        sidecar.parent.mkdir(parents=True, exist_ok=True)
        res.save(sidecar, h)
    return ansatz, res


def _mitigation_config(cfg: ExperimentConfig, seed: int) -> MitigationConfig:
    nz = cfg.noise
    return MitigationConfig(tuple(nz.scales), nz.shots, nz.trajectories, nz.extrapolation, N_UP, N_DN, seed)


def _nan_record(L: int, t: float) -> ObservableRecord:
    nan = float("nan")
    return ObservableRecord(t, nan, nan, np.full(L, nan), np.full((L, L), nan), np.full((L, L), nan))


def noisy_records(cfg: ExperimentConfig, c: qc.Circuit, t: float, seed: int, tag: str, out: Path | None):
    """Raw and mitigated series of one noisy run; failed post-selection gives NaN rows."""
    L = cfg.model.L
    nz = cfg.noise
    nm = qc.NoiseModel(nz.p1, nz.p2, seed)
    psi0 = qc.zero_state(c.n_qubits)
    if cfg.mitigation == "none":
        counts = qc.run_noisy(c, psi0, nm, nz.trajectories, nz.shots // nz.trajectories)
        return [("raw", _with_time(estimate(counts), t))]
    if cfg.mitigation == "ps":
        counts = qc.run_noisy(c, psi0, nm, nz.trajectories, nz.shots // nz.trajectories)
        try:
            ps = _with_time(estimate(post_select(counts, N_UP, N_DN)), t)
        except FullyFilteredError as err:
            warnings.warn(f"{tag}: {err}", stacklevel=2)
            ps = _nan_record(L, t)
        return [("raw", _with_time(estimate(counts), t)), ("ps", ps)]
    try:
        rep = mitigate(c, psi0, nm, _mitigation_config(cfg, seed))
    except FullyFilteredError as err:
        warnings.warn(f"{tag}: {err}", stacklevel=2)
        counts = qc.run_noisy(c, psi0, nm, nz.trajectories, nz.shots // nz.trajectories)
        return [("raw", _with_time(estimate(counts), t)), ("ps", _nan_record(L, t)), ("ps-zne", _nan_record(L, t))]
    if out is not None:
        (out / "mitigation").mkdir(parents=True, exist_ok=True)
        for obs in MITIGATED_OBSERVABLES:
            rep.value(obs).write_csv(out / "mitigation" / f"{tag}_{obs}.csv")
    return [
        ("raw", _with_time(rep.raw, t)),
        ("ps", _with_time(rep.post_selected, t)),
        ("ps-zne", _with_time(rep.zne, t)),
    ]


def run_point(cfg: ExperimentConfig, point: Point, out: Path | None = None) -> PointResult:
    params = point.params(cfg)
    times = cfg.times()
    result = PointResult(point)
    exact = exact_records(params, cfg.model.initial, times)
    if cfg.engine == "exact":
        result.records = [(t, "exact", r) for t, r in zip(times, exact)]
        return result
    warm = None
    for k, (t, ex) in enumerate(zip(times, exact)):
        result.records.append((t, "exact", ex))
        seed = point_seed(cfg, point, k)
        if cfg.engine == "trotter":
            result.records.append((t, "trotter", qubit_record(trotter_state(cfg, params, t), params.L, t)))
            continue
        if cfg.engine == "recompiled" or cfg.circuit.source == "recompiled":
            ansatz, res = recompile_point(cfg, params, times[: k + 1], seed, out, warm)
            warm = res.theta_opt
            compiled = ansatz.circuit(res.theta_opt)
        if cfg.engine == "recompiled":
            psi0 = qc.computational_state(initial_bits(params.L, cfg.model.initial))
            result.records.append((t, "recompiled", qubit_record(qc.run(compiled, psi0), params.L, t)))
            continue
        if cfg.circuit.source == "recompiled":
            circ = preparation(params.L, cfg.model.initial) + compiled
        else:
            plan = TrotterPlan(params, t, cfg.circuit.dt, cfg.circuit.grouping)
            circ = build_circuit(plan, with_init=True, initial=cfg.model.initial)
        tag = f"p{point.index:03d}_t{k:03d}"
        result.records += [(t, s, r) for s, r in noisy_records(cfg, circ, t, seed, tag, out)]
    return result


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def series_names(cfg: ExperimentConfig) -> list[str]:
    if cfg.engine == "exact":
        return ["exact"]
    if cfg.engine in ("trotter", "recompiled"):
        return ["exact", cfg.engine]
    return ["exact", "raw", *{"none": [], "ps": ["ps"], "ps-zne": ["ps", "ps-zne"]}[cfg.mitigation]]


def write_results(cfg: ExperimentConfig, results: list[PointResult], out: Path):
    L = cfg.model.L
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if cfg.experiment == "correlations":
            w.writerow(["series", "i", "j", "corr_updn", "corr_up"])
            for t, series, rec in results[0].records:
                for i in range(L):
                    for j in range(L):
                        w.writerow([series, i, j, fmt(rec.corr_updn[i, j]), fmt(rec.corr_up[i, j])])
                write_matrix_csv(out / f"corr_updn_{series}.csv", rec.corr_updn)
                write_matrix_csv(out / f"corr_up_{series}.csv", rec.corr_up)
            return
        w.writerow(["delta", "U", "t", "series", "p_updn", "p_upup", *[f"n_{i}" for i in range(L)]])
        for res in results:
            for t, series, rec in res.records:
                w.writerow(
                    [fmt(res.point.delta), fmt(res.point.U), fmt(t), series, fmt(rec.p_updn), fmt(rec.p_upup)]
                    + [fmt(x) for x in rec.density]
                )


def plot_script(cfg: ExperimentConfig) -> str:
    """gnuplot script drawing the figure panel from the CSV files next to it."""
    lines = [
        "# regenerate with: gnuplot plot.gp",
        'set datafile separator ","',
        "set terminal pngcairo size 900,600",
        "set output 'plot.png'",
        "set key outside right",
    ]
    series = series_names(cfg)
    if cfg.experiment == "correlations":
        lines += ["set view map", "set size ratio -1", "set multiplot layout 1,2"]
        main = series[-1]
        for name, label in (("corr_updn", "Gamma^{ud}"), ("corr_up", "Gamma^{uu}")):
            lines += [
                f"set title '{label} ({main})'",
                "set xlabel 'j'; set ylabel 'i'",
                f"plot '{name}_{main}.csv' skip 1 using 2:1:3 with image notitle",
            ]
        lines.append("unset multiplot")
        return "\n".join(lines) + "\n"

    if len(cfg.times()) > 1:
        xcol, xlabel = 3, "t J_up"
        curves = [(f"$1=={fmt(p.delta)} && $2=={fmt(p.U)}", f"delta={fmt(p.delta)}") for p in points(cfg)]
    else:
        xcol, xlabel = (2, "U") if cfg.swept == "U" else (1, "delta")
        curves = [("1", "")]
    lines += [f"set xlabel '{xlabel}'", "set ylabel 'probability'", "set yrange [0:1.05]"]
    plots = []
    observables = [("p_updn", 5, "P_ud")]
    if cfg.experiment != "dissociation":
        observables.append(("p_upup", 6, "P_uu"))
    for cond, label in curves:
        for s in series:
            for _, col, name in observables:
                title = " ".join(x for x in (name, s, label) if x)
                plots.append(
                    f"'results.csv' skip 1 using {xcol}:((strcol(4) eq \"{s}\" && {cond}) ? ${col} : 1/0) "
                    f"with linespoints title '{title}'"
                )
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, jobs: int = 1) -> Path:
    """Run every sweep point, then write results.csv, config.resolved and plot.gp."""
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pts = points(cfg)
    if jobs > 1 and len(pts) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(pts))) as pool:
            results = list(pool.map(run_point, [cfg] * len(pts), pts, [out] * len(pts)))
    else:
        results = [run_point(cfg, p, out) for p in pts]
    write_results(cfg, results, out)
    (out / "config.resolved").write_text(cfg.to_toml())
    (out / "plot.gp").write_text(plot_script(cfg))
    return out

