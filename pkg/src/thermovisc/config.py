"""Run configuration: nested dataclasses, an INI reader/writer and validation.

Format::

    # optional dotted keys before the first section
    exponent.p = 4

    [grid]
    shape = 16, 16, 1

    [initial]
    scenario = heat_bump

Omitted keys take their defaults.  The selected scenario may patch defaults
(grid size, step, material constants); keys written in the file always win.
Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from . import constitutive as cm
from .grid_ops import Grid
from .state import ADVECTION_MODES, SOLVER_MODES, StepConfig

ROOT = "__root__"


class ConfigError(ValueError):
    """Invalid configuration text or values.  ``line``/``column`` are 1-based
    positions in the source text when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line, self.column = line, column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass
class GridConfig:
    shape: tuple = (8, 8, 1)
    lengths: tuple = (1.0, 1.0, 1.0)


@dataclass
class MaterialConfig:
    bulk_modulus: float = 1.0
    shear_modulus: float = 1.0
    expansion: float = 0.1
    heat_capacity: float = 1.0


@dataclass
class DissipationConfig:
    eta_shear: float = 0.05
    eta_bulk: float = 0.05
    mu: float = 1e-4
    creep_modulus: float = math.inf
    creep_activation: float = 0.0


@dataclass
class HeatConfig:
    """``h_ext`` per face in the order xmin, xmax, ymin, ymax, zmin, zmax
    (a single value applies to all faces)."""

    kappa0: float = 0.1
    a1: float = 0.0
    a2: float = 0.0
    h_ext: tuple = (0.0,) * 6
    source: float = 0.0


@dataclass
class ExponentConfig:
    """Heat-capacity growth ``alpha``, conductivity growth ``beta``,
    entropy-test exponent ``lam``, hyper-viscosity ``p`` and the stabilizer
    exponents ``r`` (density), ``s`` (strain), ``p_v`` (velocity)."""

    alpha: float = 0.3
    beta: float = 0.0
    lam: float = 0.1
    p: float = 4.0
    r: float = 4.0
    s: float = 4.0
    p_v: float = 4.0
    override: bool = False


@dataclass
class LoadingConfig:
    gravity: tuple = (0.0, 0.0, 0.0)


@dataclass
class InitialConfig:
    """Scenario selector and its parameters; each scenario reads only the
    parameters it needs."""

    scenario: str = "rest_equilibrium"
    rho0: float = 1.0
    theta0: float = 1.0
    strain: tuple = (0.0,) * 6
    amplitude: float = 0.0
    width: float = 0.15
    center: tuple = (0.5, 0.5, 0.5)
    omega: float = 2.0 * math.pi
    wavenumber: int = 1
    compress: float = 0.0


@dataclass
class TimeConfig:
    tau: float = 0.05
    t_end: float = 0.5


@dataclass
class SolverConfig:
    tol_newton: float = 1e-10
    max_newton: int = 25
    max_halvings: int = 10
    advection: str = "central"
    mode: str = "monolithic"
    delta: float = 0.0
    eps_v: float = 0.0
    eps_s: float = 0.0
    threads: int = 1


@dataclass
class OutputConfig:
    directory: str = "out"
    csv: str = "ledger.csv"
    vtk_every: int = 0


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    dissipation: DissipationConfig = field(default_factory=DissipationConfig)
    heat: HeatConfig = field(default_factory=HeatConfig)
    exponent: ExponentConfig = field(default_factory=ExponentConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def sections(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def replace(self, **changes) -> "RunConfig":
        """Copy with dotted-key changes, e.g. ``replace(**{"time.tau": 0.1})``."""
        cfg = copy_config(self)
        for key, value in changes.items():
            section, name = key.split(".", 1)
            setattr(getattr(cfg, section), name, value)
        return cfg

    # --- derived objects -------------------------------------------------

    def make_grid(self) -> Grid:
        return Grid(tuple(self.grid.shape), tuple(self.grid.lengths))

    def make_material(self) -> cm.MaterialModel:
        m = self.material
        return cm.thermo_creep_material(m.bulk_modulus, m.shear_modulus, m.expansion,
                                        m.heat_capacity, self.exponent.alpha)

    def make_dissipation(self) -> cm.DissipationModel:
        d = self.dissipation
        return cm.DissipationModel(
            eta_shear=d.eta_shear, eta_bulk=d.eta_bulk, mu=d.mu, p=self.exponent.p,
            creep=cm.QuadraticCreep(d.creep_modulus, d.creep_activation))

    def make_heat(self) -> cm.HeatModel:
        h = self.heat
        return cm.HeatModel(kappa0=h.kappa0, beta=self.exponent.beta, a1=h.a1, a2=h.a2,
                            h_ext=dict(zip(cm.FACES, h.h_ext)), source=h.source)

    def make_step(self) -> StepConfig:
        s, e = self.solver, self.exponent
        return StepConfig(tau=self.time.tau, tol_newton=s.tol_newton, max_newton=s.max_newton,
                          max_halvings=s.max_halvings, delta=s.delta, r=e.r, eps_v=s.eps_v,
                          p_v=e.p_v, eps_s=s.eps_s, s=e.s, advection=s.advection,
                          lam=e.lam, mode=s.mode)


def copy_config(cfg: RunConfig) -> RunConfig:
    return RunConfig(**{name: dataclasses.replace(sec) for name, sec in cfg.sections().items()})


# ---------------------------------------------------------------------------
# value conversion

_TUPLE_LENGTHS = {("grid", "shape"): (3,), ("grid", "lengths"): (3,),
                  ("heat", "h_ext"): (1, 6), ("loading", "gravity"): (3,),
                  ("initial", "strain"): (6,), ("initial", "center"): (3,)}


def _convert(section: str, name: str, default: Any, text: str) -> Any:
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, str):
        return text
    if isinstance(default, tuple):
        parts = [p for p in re.split(r"[,\s]+", text) if p]
        kind = type(default[0])
        values = tuple(kind(p) for p in parts)
        allowed = _TUPLE_LENGTHS[(section, name)]
        if len(values) not in allowed:
            raise ValueError(f"expected {' or '.join(map(str, allowed))} values, got {len(values)}")
        if len(values) == 1 and len(default) > 1:
            values = values * len(default)
        return values
    raise TypeError(f"unsupported option type for {section}.{name}")


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def dump(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config` reads back to an equal config."""
    out = io.StringIO()
    for name, sec in cfg.sections().items():
        out.write(f"[{name}]\n")
        for f in dataclasses.fields(sec):
            out.write(f"{f.name} = {_format(getattr(sec, f.name))}\n")
        out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# parsing

_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]")
_KEY_RE = re.compile(r"^(\s*)([^=:\s#;\[][^=:]*?)\s*[=:]\s*")


def _locate_keys(text: str) -> dict:
    """``(section, key) -> (line, column of the value)`` by a light scan."""
    where = {}
    section = ROOT
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            continue
        m = _KEY_RE.match(line)
        if m:
            where.setdefault((section, m.group(2).strip()), (i, m.end() + 1))
    return where


def _read(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       empty_lines_in_values=False, default_section="\0")
    parser.optionxform = str
    try:
        parser.read_string(f"[{ROOT}]\n" + text)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno - 1, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]",
                          exc.lineno - 1, 1) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] - 1
        line = text.splitlines()[lineno - 1] if 0 < lineno <= len(text.splitlines()) else ""
        col = len(line) - len(line.lstrip()) + 1
        raise ConfigError(f"cannot parse {line.strip()!r} (expected 'key = value')",
                          lineno, col) from None
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}", getattr(exc, "lineno", None)) from None
    return parser


def _entries(parser: configparser.ConfigParser, where: dict) -> list:
    """Flatten to ``(section, key, raw, line, column)``; dotted keys are
    accepted anywhere and address ``section.key`` directly."""
    sections = RunConfig().sections()
    out = []
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            line, col = where.get((sec, key), (None, None))
            if sec != ROOT and sec not in sections:
                raise ConfigError(f"unknown section [{sec}]; known: {', '.join(sections)}",
                                  line, 1)
            if "." in key:
                target, name = key.split(".", 1)
                if target not in sections:
                    raise ConfigError(f"unknown section {target!r} in key {key!r}", line, 1)
            elif sec == ROOT:
                raise ConfigError(f"key {key!r} outside a section (write it as section.{key})",
                                  line, 1)
            else:
                target, name = sec, key
            names = {f.name for f in dataclasses.fields(sections[target])}
            if name not in names:
                raise ConfigError(f"unknown key {name!r} in [{target}]; known: "
                                  f"{', '.join(sorted(names))}", line, 1)
            out.append((target, name, raw, line, col))
    return out


def parse_config(text: str, validate_values: bool = True) -> RunConfig:
    """Read INI text into a validated :class:`RunConfig`."""
    from .scenarios import scenario_patch

    where = _locate_keys(text)
    entries = _entries(_read(text), where)

    cfg = RunConfig()
    default_cfg = RunConfig()
    scenario, scenario_line = cfg.initial.scenario, None
    for target, name, raw, line, col in entries:
        if (target, name) == ("initial", "scenario"):
            scenario, scenario_line = raw.strip(), line
    try:
        patch = scenario_patch(scenario)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), scenario_line) from None
    for key, value in patch.items():
        section, name = key.split(".", 1)
        setattr(getattr(cfg, section), name, value)

    for target, name, raw, line, col in entries:
        default = getattr(getattr(default_cfg, target), name)
        try:
            value = _convert(target, name, default, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {target}.{name}: {exc}", line, col) from None
        setattr(getattr(cfg, target), name, value)

    if validate_values:
        validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# validation


def exponent_problems(cfg: RunConfig) -> list[str]:
    e = cfg.exponent
    return cm.exponent_violations(e.alpha, e.beta, e.lam)


def validate(cfg: RunConfig) -> list[str]:
    """Raise :class:`ConfigError` on invalid values.  Returns warnings (for
    example an overridden exponent check) for the caller to log."""
    from .scenarios import SCENARIOS

    notes = []
    e = cfg.exponent
    if not e.p > 3:
        raise ConfigError(f"exponent.p = {e.p}: hyper-viscosity needs p > 3")
    bad = exponent_problems(cfg)
    if bad:
        msg = (f"exponents (alpha, beta, lambda) = ({e.alpha}, {e.beta}, {e.lam}) are outside "
               f"the admissible growth region: {'; '.join(bad)}")
        if not e.override:
            raise ConfigError(msg + " (set exponent.override = true to run anyway)")
        notes.append("override: " + msg)
    if not e.lam < 1.0 + e.alpha:
        raise ConfigError(f"entropy exponent lambda = {e.lam} must be < 1 + alpha = {1 + e.alpha}")
    if cfg.initial.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.initial.scenario!r}; known: "
                          f"{', '.join(SCENARIOS)}")
    if cfg.solver.advection not in ADVECTION_MODES:
        raise ConfigError(f"solver.advection must be one of {ADVECTION_MODES}")
    if cfg.solver.mode not in SOLVER_MODES:
        raise ConfigError(f"solver.mode must be one of {SOLVER_MODES}")
    if cfg.solver.threads < 1:
        raise ConfigError("solver.threads must be >= 1")
    if not cfg.time.t_end >= 0:
        raise ConfigError("time.t_end must be >= 0")
    if cfg.output.vtk_every < 0:
        raise ConfigError("output.vtk_every must be >= 0")
    ini = cfg.initial
    if not ini.rho0 > 0:
        raise ConfigError("initial.rho0 must be positive (no vacuum at t = 0)")
    if not ini.theta0 > 0:
        raise ConfigError("initial.theta0 must be positive")
    try:
        cfg.make_grid()
        cfg.make_material()
        cfg.make_dissipation()
        cfg.make_heat()
        cfg.make_step()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return notes


__all__ = ["RunConfig", "GridConfig", "MaterialConfig", "DissipationConfig", "HeatConfig",
           "ExponentConfig", "LoadingConfig", "InitialConfig", "TimeConfig", "SolverConfig",
           "OutputConfig", "ConfigError", "parse_config", "load_config", "dump", "validate",
           "copy_config"]
