"""Post-selection, gate folding and zero-noise extrapolation on measured counts."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .circuit import Circuit, Counts, NoiseModel, run_noisy
from .exact import ObservableRecord, fmt, observables_from_probabilities

EXTRAPOLATIONS = ("richardson", "linear")


class FullyFilteredError(RuntimeError):
    """Post-selection discarded every shot."""


# ---------------------------------------------------------------------------
# post-selection
# ---------------------------------------------------------------------------


def post_select(c: Counts, n_up: int, n_dn: int) -> Counts:
    """Keep bitstrings with ``n_up`` ones on the first half and ``n_dn`` on the second."""
    if c.n_qubits % 2:
        raise ValueError("post-selection needs an even register (two chains)")
    L = c.n_qubits // 2
    kept = {b: k for b, k in c.items() if b[:L].count("1") == n_up and b[L:].count("1") == n_dn}
    if not kept:
        raise FullyFilteredError(f"no shot out of {c.total_shots} has (n_up, n_dn) = ({n_up}, {n_dn})")
    return Counts(c.n_qubits, kept)


# ---------------------------------------------------------------------------
# folding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldSpec:
    """Noise scale for two-qubit gate folding.

    A scale ``lam`` turns ``n`` two-qubit gates into about ``lam * n``: every
    gate is folded ``k`` times and the first few (in circuit order) once
    more, with ``ceil((lam - 1) n / 2)`` folds in total.
    """

    scale: float

    def __post_init__(self):
        if not self.scale >= 1:
            raise ValueError(f"noise scale must be >= 1, got {self.scale}")

    def folds_per_gate(self, n_two_qubit: int) -> list[int]:
        total = math.ceil((self.scale - 1) * n_two_qubit / 2 - 1e-9)
        if n_two_qubit == 0:
            return []
        k, extra = divmod(total, n_two_qubit)
        return [k + (i < extra) for i in range(n_two_qubit)]


def fold(c: Circuit, spec: FoldSpec) -> Circuit:
    """Replace folded two-qubit gates G by G (G^dag G)^k; single-qubit gates stay."""
    folds = iter(spec.folds_per_gate(c.two_qubit_count))
    out = Circuit(c.n_qubits)
    for g in c.gates:
        out.append(g)
        if g.arity == 2:
            inv = g.inverse()
            for _ in range(next(folds)):
                out.append(inv)
                out.append(g)
    return out


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def estimate(c: Counts) -> ObservableRecord:
    """All diagonal observables, estimated from shot frequencies."""
    if c.total_shots == 0:
        raise ValueError("cannot estimate from empty counts")
    bits, weights = c.to_arrays()
    L = c.n_qubits // 2
    return observables_from_probabilities(weights / weights.sum(), bits[:, :L], bits[:, L:])


def _pick(rec: ObservableRecord, observable) -> float:
    if isinstance(observable, str):
        if observable in ("p_updn", "p_upup"):
            return getattr(rec, observable)
        name, _, idx = observable.partition("_")
        if name == "density" and idx.isdigit():
            return float(rec.density[int(idx)])
        raise ValueError(f"unknown observable {observable!r}")
    name, *idx = observable
    if name == "density":
        return float(rec.density[idx[0]])
    if name in ("corr_updn", "corr_up"):
        return float(getattr(rec, name)[idx[0], idx[1]])
    raise ValueError(f"unknown observable {observable!r}")


def expectation(c: Counts, observable) -> float:
    """Shot estimate of one observable.

    ``observable`` is ``"p_updn"``, ``"p_upup"``, ``"density_<i>"`` or a tuple
    ``("density", i)``, ``("corr_updn", i, j)``, ``("corr_up", i, j)``.
    """
    return _pick(estimate(c), observable)


def observable_bound(observable, n_up: int = 2, n_dn: int = 1) -> float:
    name = observable if isinstance(observable, str) else observable[0]
    if name == "p_updn":
        return float(min(n_up, n_dn))
    if name == "p_upup":
        return float(max(n_up - 1, 0))
    if name.startswith("density"):
        return 2.0
    return 1.0


# ---------------------------------------------------------------------------
# extrapolation
# ---------------------------------------------------------------------------


def richardson_weights(scales) -> np.ndarray:
    """Lagrange weights w with p(0) = sum_k w_k p(scale_k) for the interpolating polynomial."""
    s = np.asarray(scales, dtype=np.float64)
    if len(np.unique(s)) != len(s):
        raise ValueError(f"duplicate noise scales in {scales}")
    if len(s) < 2:
        raise ValueError("need at least two noise scales")
    w = np.ones_like(s)
    for k in range(len(s)):
        for j in range(len(s)):
            if j != k:
                w[k] *= s[j] / (s[j] - s[k])
    return w


def linear_weights(scales) -> np.ndarray:
    """Weights of the least-squares straight line evaluated at zero."""
    s = np.asarray(scales, dtype=np.float64)
    if len(np.unique(s)) != len(s) or len(s) < 2:
        raise ValueError(f"need at least two distinct noise scales, got {scales}")
    A = np.stack([np.ones_like(s), s], axis=1)
    return np.linalg.pinv(A)[0]


@dataclass
class ZneEstimate:
    scales: list[float]
    values: list[float]
    value: float
    order: int
    method: str = "richardson"


def zne(values, method: str = "richardson") -> ZneEstimate:
    """Extrapolate ``[(scale, expectation), ...]`` to zero noise."""
    scales = [float(s) for s, _ in values]
    vals = [float(v) for _, v in values]
    w = _weights(scales, method)
    order = len(scales) - 1 if method == "richardson" else 1
    return ZneEstimate(scales, vals, float(w @ np.array(vals)), order, method)


def _weights(scales, method: str) -> np.ndarray:
    if method == "richardson":
        return richardson_weights(scales)
    if method == "linear":
        return linear_weights(scales)
    raise ValueError(f"unknown extrapolation {method!r}")


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MitigationConfig:
    scales: tuple[float, ...] = (1.0, 2.0, 3.0)
    shots: int = 6000
    trajectories: int | None = None  # None: one noise realization per shot
    extrapolation: str = "richardson"
    n_up: int = 2
    n_dn: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.trajectories is None:
            object.__setattr__(self, "trajectories", self.shots)
        if self.trajectories <= 0 or self.shots % self.trajectories:
            raise ValueError(f"shots ({self.shots}) must be a positive multiple of trajectories ({self.trajectories})")
        if self.extrapolation not in EXTRAPOLATIONS:
            raise ValueError(f"extrapolation must be one of {EXTRAPOLATIONS}")
        _weights(self.scales, self.extrapolation)


@dataclass
class ScaledRun:
    scale: float
    counts: Counts
    raw: ObservableRecord
    post_selected: ObservableRecord
    retained_fraction: float


@dataclass
class MitigationReport:
    runs: list[ScaledRun]
    raw: ObservableRecord
    post_selected: ObservableRecord
    zne: ObservableRecord
    method: str = "richardson"

    def value(self, observable) -> MitigatedValue:
        return MitigatedValue(
            observable=observable,
            raw=_pick(self.raw, observable),
            post_selected=_pick(self.post_selected, observable),
            zne=_pick(self.zne, observable),
            bound=observable_bound(observable),
            rows=[
                (r.scale, _pick(r.raw, observable), _pick(r.post_selected, observable), r.retained_fraction)
                for r in self.runs
            ],
        )


@dataclass
class MitigatedValue:
    observable: object
    raw: float
    post_selected: float
    zne: float
    bound: float
    rows: list[tuple[float, float, float, float]] = field(default_factory=list)

    @property
    def zne_clamped(self) -> float:
        return float(np.clip(self.zne, 0.0, self.bound))

    def write_csv(self, path: str | Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "raw", "post_selected", "retained_fraction"])
            for scale, raw, ps, frac in self.rows:
                w.writerow([fmt(scale), fmt(raw), fmt(ps), fmt(frac)])
            w.writerow(["0", fmt(self.zne), fmt(self.zne), ""])


def _combine(records: list[ObservableRecord], w: np.ndarray) -> ObservableRecord:
    def lin(attr):
        return sum(wk * np.asarray(getattr(r, attr)) for wk, r in zip(w, records))

    return ObservableRecord(
        t=records[0].t,
        p_updn=float(lin("p_updn")),
        p_upup=float(lin("p_upup")),
        density=lin("density"),
        corr_updn=lin("corr_updn"),
        corr_up=lin("corr_up"),
    )


def mitigate(circuit: Circuit, psi0: np.ndarray, nm: NoiseModel, cfg: MitigationConfig) -> MitigationReport:
    """Fold, run noisily, post-select and extrapolate every diagonal observable.

    Post-selection happens before extrapolation: the zero-noise value is
    extrapolated from post-selected estimates.
    """
    seeds = np.random.SeedSequence(cfg.seed).generate_state(len(cfg.scales))

    def one(scale, s) -> ScaledRun:
        folded = fold(circuit, FoldSpec(scale))
        counts = run_noisy(folded, psi0, replace(nm, seed=int(s)), cfg.trajectories, cfg.shots // cfg.trajectories)
        try:
            kept = post_select(counts, cfg.n_up, cfg.n_dn)
        except FullyFilteredError as err:
            raise FullyFilteredError(f"noise scale {scale}: {err}") from None
        return ScaledRun(scale, counts, estimate(counts), estimate(kept), kept.total_shots / counts.total_shots)

    # the scaled runs are independent; the statevector kernel releases the GIL
    with ThreadPoolExecutor(max_workers=len(cfg.scales)) as pool:
        runs = list(pool.map(one, cfg.scales, seeds))
    w = _weights(cfg.scales, cfg.extrapolation)
    first = runs[int(np.argmin(cfg.scales))]
    return MitigationReport(
        runs=runs,
        raw=first.raw,
        post_selected=first.post_selected,
        zne=_combine([r.post_selected for r in runs], w),
        method=cfg.extrapolation,
    )


def mitigated_observable(
    c: Circuit, psi0: np.ndarray, nm: NoiseModel, obs, cfg: MitigationConfig | None = None
) -> MitigatedValue:
    """Raw, post-selected and PS+ZNE estimates of one observable."""
    return mitigate(c, psi0, nm, cfg or MitigationConfig()).value(obs)
