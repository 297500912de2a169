"""Experiment configuration: TOML file plus ``--set section.key=value`` overrides."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from .exact import INITIAL_STATES
from .mitigate import EXTRAPOLATIONS
from .recompile import DEFAULT_ACCEPT, DEFAULT_BUDGET, DEFAULT_PATTERN, DEFAULT_RESTARTS, PATTERNS
from .trotter import DEFAULT_DT, GROUPINGS

EXPERIMENTS = ("sweep-time", "sweep-U", "sweep-delta", "correlations", "dissociation")
ENGINES = ("exact", "trotter", "recompiled", "noisy")
MITIGATIONS = ("none", "ps", "ps-zne")
EXACT_L = 51
CIRCUIT_L = 7


class ConfigError(ValueError):
    """Invalid configuration; ``diagnostics`` holds one message per problem."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


@dataclass
class ModelSection:
    L: int | None = None  # None: 51 for the exact engine, 7 for circuit engines
    J_up: float = 1.0
    delta: float = 0.2
    U: float = 10.0
    V: float = 10.0
    initial: str | None = None  # None: "dissoc" for the dissociation experiment, else "walk"


@dataclass
class TimeSection:
    t: float | None = None  # evaluation time of fixed-time experiments
    t_start: float = 0.0  # time grid of sweep-time and dissociation
    t_max: float | None = None
    t_step: float | None = None


@dataclass
class SweepSection:
    """Grid of the swept parameter (U for sweep-U, delta otherwise)."""

    start: float | None = None
    stop: float | None = None
    step: float | None = None
    values: list[float] = field(default_factory=list)


@dataclass
class CircuitSection:
    dt: float = DEFAULT_DT
    grouping: str = "diagonal"
    n_rounds: int | None = None  # None: 8, or 12 for the dissociation experiment
    pattern: str = DEFAULT_PATTERN
    budget: int = DEFAULT_BUDGET
    restarts: int = DEFAULT_RESTARTS
    accept: float = DEFAULT_ACCEPT  # fidelity above which no further restart is tried
    source: str = "recompiled"  # circuit run by the noisy engine: "recompiled" or "trotter"


@dataclass
class NoiseSection:
    p1: float = 0.001
    p2: float = 0.01
    shots: int = 6000
    trajectories: int | None = None  # None: one noise realization per shot
    scales: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    extrapolation: str = "richardson"


SECTIONS = {
    "model": ModelSection,
    "time": TimeSection,
    "sweep": SweepSection,
    "circuit": CircuitSection,
    "noise": NoiseSection,
}
TOP_LEVEL = {"experiment": "sweep-time", "engine": "exact", "mitigation": "none", "seed": 0, "out": "results"}


@dataclass
class ExperimentConfig:
    experiment: str = "sweep-time"
    engine: str = "exact"
    mitigation: str = "none"
    seed: int = 0
    out: str = "results"
    model: ModelSection = field(default_factory=ModelSection)
    time: TimeSection = field(default_factory=TimeSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    circuit: CircuitSection = field(default_factory=CircuitSection)
    noise: NoiseSection = field(default_factory=NoiseSection)

    # -- derived quantities, valid after resolve() ---------------------------

    @property
    def swept(self) -> str:
        return "U" if self.experiment == "sweep-U" else "delta"

    def grid(self) -> list[float]:
        s = self.sweep
        if s.values:
            return [float(v) for v in s.values]
        if s.start is None:
            return [self.model.U if self.swept == "U" else self.model.delta]
        n = int(round((s.stop - s.start) / s.step))
        return [round(s.start + k * s.step, 12) for k in range(n + 1)]

    def times(self) -> list[float]:
        tm = self.time
        if self.experiment in ("sweep-U", "sweep-delta", "correlations"):
            return [tm.t]
        n = int(round((tm.t_max - tm.t_start) / tm.t_step))
        return [round(tm.t_start + k * tm.t_step, 12) for k in range(n + 1)]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        # TOML has no null; drop unset optionals
        return {k: ({kk: vv for kk, vv in v.items() if vv is not None} if isinstance(v, dict) else v) for k, v in d.items()}

    def to_toml(self) -> str:
        d = self.to_dict()
        lines = [f"{k} = {_toml_value(d[k])}" for k in TOP_LEVEL]
        for name in SECTIONS:
            lines.append(f"\n[{name}]")
            lines += [f"{k} = {_toml_value(v)}" for k, v in d[name].items()]
        return "\n".join(lines) + "\n"

    def resolve(self) -> ExperimentConfig:
        """Fill engine- and experiment-dependent defaults and check invariants."""
        cfg = dataclasses.replace(
            self,
            model=dataclasses.replace(self.model),
            time=dataclasses.replace(self.time),
            sweep=dataclasses.replace(self.sweep, values=list(self.sweep.values)),
            circuit=dataclasses.replace(self.circuit),
            noise=dataclasses.replace(self.noise, scales=list(self.noise.scales)),
        )
        problems = _choice_problems(cfg)
        if problems:
            raise ConfigError(problems)
        circuit_engine = cfg.engine != "exact"
        m, tm = cfg.model, cfg.time
        if m.L is None:
            m.L = CIRCUIT_L if circuit_engine else EXACT_L
        if m.initial is None:
            m.initial = "dissoc" if cfg.experiment == "dissociation" else "walk"
        if cfg.circuit.n_rounds is None:
            cfg.circuit.n_rounds = 12 if cfg.experiment == "dissociation" else 8
        default_t = 1.6 if circuit_engine else 10.0
        if cfg.experiment == "dissociation" and circuit_engine:
            default_t = 2.5
        if tm.t is None:
            tm.t = default_t
        if tm.t_max is None:
            tm.t_max = default_t
        if cfg.noise.trajectories is None:
            cfg.noise.trajectories = cfg.noise.shots
        if tm.t_step is None:
            tm.t_step = 0.2 if circuit_engine and cfg.experiment != "dissociation" else 0.5
        problems = _value_problems(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def _choice_problems(cfg: ExperimentConfig) -> list[str]:
    out = []
    for key, allowed in (("experiment", EXPERIMENTS), ("engine", ENGINES), ("mitigation", MITIGATIONS)):
        if getattr(cfg, key) not in allowed:
            out.append(f"{key}: {getattr(cfg, key)!r} is not one of {', '.join(allowed)}")
    if cfg.mitigation != "none" and cfg.engine != "noisy":
        out.append(f"mitigation = {cfg.mitigation!r} conflicts with engine = {cfg.engine!r}: mitigation needs engine = 'noisy'")
    if cfg.model.initial is not None and cfg.model.initial not in INITIAL_STATES:
        out.append(f"model.initial: {cfg.model.initial!r} is not one of {', '.join(INITIAL_STATES)}")
    if cfg.circuit.grouping not in GROUPINGS:
        out.append(f"circuit.grouping: {cfg.circuit.grouping!r} is not one of {', '.join(GROUPINGS)}")
    if cfg.circuit.pattern not in PATTERNS:
        out.append(f"circuit.pattern: {cfg.circuit.pattern!r} is not one of {', '.join(PATTERNS)}")
    if cfg.circuit.source not in ("recompiled", "trotter"):
        out.append(f"circuit.source: {cfg.circuit.source!r} is not 'recompiled' or 'trotter'")
    if cfg.noise.extrapolation not in EXTRAPOLATIONS:
        out.append(f"noise.extrapolation: {cfg.noise.extrapolation!r} is not one of {', '.join(EXTRAPOLATIONS)}")
    return out


def _value_problems(cfg: ExperimentConfig) -> list[str]:
    m, tm, s, c, nz = cfg.model, cfg.time, cfg.sweep, cfg.circuit, cfg.noise
    out = []
    if m.L % 2 == 0:
        out.append(f"model.L: L must be odd (got {m.L}); the initial states sit around a central site")
    elif m.L < 5:
        out.append(f"model.L: must be >= 5, got {m.L}")
    elif cfg.engine != "exact" and m.L > 9:
        out.append(f"model.L: circuit engines simulate 2L qubits; L = {m.L} is too large (max 9)")
    if m.J_up <= 0:
        out.append("model.J_up: must be positive")
    if m.delta < 0:
        out.append("model.delta: must be >= 0")
    for name in ("t", "t_start", "t_max"):
        if getattr(tm, name) < 0:
            out.append(f"time.{name}: must be >= 0")
    span = tm.t_max - tm.t_start
    if tm.t_step <= 0:
        out.append("time.t_step: must be positive")
    elif span < 0 or abs(span / tm.t_step - round(span / tm.t_step)) > 1e-9:
        out.append(f"time: t_max - t_start ({span:g}) must be a non-negative multiple of t_step ({tm.t_step})")
    set_range = [k for k in ("start", "stop", "step") if getattr(s, k) is not None]
    if set_range and len(set_range) != 3:
        out.append("sweep: give all of start, stop, step (or values)")
    elif set_range:
        if s.step <= 0 or s.stop < s.start:
            out.append("sweep: need step > 0 and stop >= start")
        elif abs((s.stop - s.start) / s.step - round((s.stop - s.start) / s.step)) > 1e-9:
            out.append("sweep: stop - start must be a multiple of step")
    if not out and cfg.swept == "delta" and any(v < 0 for v in cfg.grid()):
        out.append("sweep: delta values must be >= 0")
    if c.dt <= 0:
        out.append("circuit.dt: must be positive")
    if c.n_rounds < 1 or c.budget < 1 or c.restarts < 0:
        out.append("circuit: need n_rounds >= 1, budget >= 1, restarts >= 0")
    if not 0 <= c.accept <= 1:
        out.append("circuit.accept: must lie in [0, 1]")
    if not (0 <= nz.p1 <= 1 and 0 <= nz.p2 <= 1):
        out.append("noise: p1 and p2 must lie in [0, 1]")
    if nz.shots <= 0 or nz.trajectories <= 0 or nz.shots % nz.trajectories:
        out.append(f"noise.shots ({nz.shots}) must be a positive multiple of noise.trajectories ({nz.trajectories})")
    if len(set(nz.scales)) != len(nz.scales) or len(nz.scales) < 2 or min(nz.scales) < 1:
        out.append(f"noise.scales: need at least two distinct values >= 1, got {nz.scales}")
    return out


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to its 1-based line number in a TOML document."""
    where, section = {}, ""
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        head = re.match(r"^\[\s*([^\]]+?)\s*\]", s)
        if head:
            section = head.group(1)
            where.setdefault((section, ""), n)
            continue
        kv = re.match(r'^([A-Za-z0-9_."-]+)\s*=', s)
        if kv:
            key = kv.group(1).strip('"')
            full = f"{section}.{key}" if section else key
            sec, _, k = full.rpartition(".")
            where.setdefault((sec, k), n)
    return where


def _coerce(value, typ_name: str, where: str):
    """Check a TOML value against a field annotation string."""
    opt = "None" in typ_name
    if value is None and opt:
        return None
    if typ_name.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise TypeError(f"{where}: expected an integer, got {value!r}")
        return value
    if typ_name.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if typ_name.startswith("str"):
        if not isinstance(value, str):
            raise TypeError(f"{where}: expected a string, got {value!r}")
        return value
    if typ_name.startswith("list"):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise TypeError(f"{where}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    raise TypeError(f"{where}: unsupported field type {typ_name}")  # pragma: no cover


def from_dict(data: dict, lines: dict | None = None, source: str = "<config>") -> ExperimentConfig:
    """Build an unresolved config, collecting every unknown key and type error."""
    lines = lines or {}
    problems = []

    def loc(section, key):
        n = lines.get((section, key))
        return f"{source}:{n}" if n else source

    top, sections = {}, {}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"{loc('', key)}: {key} must be a table")
                continue
            cls = SECTIONS[key]
            known = {f.name: f for f in fields(cls)}
            kwargs = {}
            for k, v in value.items():
                if k not in known:
                    hint = _suggest(k, known)
                    problems.append(f"{loc(key, k)}: unknown key {key}.{k}{hint}")
                    continue
                try:
                    kwargs[k] = _coerce(v, str(known[k].type), f"{loc(key, k)}: {key}.{k}")
                except TypeError as err:
                    problems.append(str(err))
            sections[key] = cls(**kwargs)
        elif key in TOP_LEVEL:
            typ = "int" if key == "seed" else "str"
            try:
                top[key] = _coerce(value, typ, f"{loc('', key)}: {key}")
            except TypeError as err:
                problems.append(str(err))
        else:
            problems.append(f"{loc('', key)}: unknown key {key}{_suggest(key, {**TOP_LEVEL, **SECTIONS})}")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**top, **sections)


def _suggest(key: str, known) -> str:
    import difflib

    close = difflib.get_close_matches(key, list(known), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def parse_override(item: str) -> tuple[list[str], object]:
    """``section.key=value`` with a TOML value; bare words are taken as strings."""
    if "=" not in item:
        raise ConfigError([f"--set {item!r}: expected key=value"])
    key, raw = (s.strip() for s in item.split("=", 1))
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key.split("."), value


def load(path: str | Path | None = None, overrides: list[str] = (), text: str | None = None) -> ExperimentConfig:
    """Read, override and resolve a config.  An empty document gives the defaults."""
    source = str(path) if path is not None else "<config>"
    if text is None:
        text = Path(path).read_text() if path is not None else ""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError([f"{source}: {err}"]) from None
    for item in overrides:
        keys, value = parse_override(item)
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError([f"--set {item!r}: {k} is not a table"])
        node[keys[-1]] = value
    lines = _key_lines(text)
    cfg = from_dict(data, lines, source)
    try:
        return cfg.resolve()
    except ConfigError as err:
        raise ConfigError([_locate(d, lines, source) for d in err.diagnostics]) from None


def _locate(diagnostic: str, lines: dict, source: str) -> str:
    """Prefix a ``section.key: ...`` diagnostic with the file position of that key."""
    head = diagnostic.split(":", 1)[0].split()[0]
    section, _, key = head.rpartition(".")
    n = lines.get((section, key)) or lines.get((section, ""))
    return f"{source}:{n}: {diagnostic}" if n else f"{source}: {diagnostic}"
