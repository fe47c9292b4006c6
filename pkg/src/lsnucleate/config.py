"""Run configuration: TOML grammar, benchmark presets and validation.

A config document is TOML with an optional top-level ``preset`` (and
``scale``) plus the sections ``grid``, ``material``, ``schedules``,
``coupling``, ``weights``, ``constraints`` and ``output``. Keys omitted from
the document keep the preset value; lengths left unset are derived from the
element size ``h``. Unknown keys and mistyped values are rejected with the
offending key named.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .couple import ConfigError, ContinuationSchedule, MaterialModel, SfcConfig, TfcConfig
from .fixtures import beam2d_fixture, ex1_fixture
from .opt.problem import Fixture, ProblemSpec
from .regularize import RegConfig

log = logging.getLogger(__name__)

FIXTURES = {"ex1": ex1_fixture, "beam2d": beam2d_fixture}


@dataclass
class GridSection:
    fixture: str = "ex1"
    nx: int = 120
    ny: int = 80
    h: float = 0.5
    band: int = 2
    traction: float = -10.0


@dataclass
class MaterialSection:
    E0: float = 2.0e3
    E_void: float = 1.0e-8
    nu: float = 0.4
    theta0: float = 1.0
    beta: float = 2.0
    heaviside_power: float = 1.0
    rho0: float = 0.4


@dataclass
class ScheduleSection:
    D_st: int = 50
    D_c: int = 400
    D_max: int = 500
    rho_sh0: float = 0.0
    rho_th0: float = 0.28
    eta_sh: float = 2.0
    eta_th: float = 2.0


@dataclass
class CouplingSection:
    phi_sh: float = 0.5
    phi_rt: float | None = None  # 4h
    phi_up: float | None = None  # 2.5h
    phi_low: float | None = None  # -2.5h
    phi_th: float | None = None  # 0.25 * phi_low
    phi0: float | None = None  # 0.5 * phi_up
    xi: float = 0.5
    r_f: float | None = None  # 1.6h
    gamma_s: float = 1e-6


@dataclass
class WeightSection:
    w1: float = 0.93
    w2: float = 0.01
    w3: float = 0.05
    w4: float = 0.01
    w2_final: float | None = None  # perimeter weight continued to this value
    eta_w2: float = 3.0
    w2_post: float | None = None  # perimeter weight once continuation is over
    w_psi: float = 0.0
    w_phi1: float = 1.0
    w_phi2: float = 1.0
    w_grad1: float = 1.0
    w_grad2: float = 1.0
    gamma_reg: float = 36.8


@dataclass
class ConstraintSection:
    objective: str = "compliance"
    gamma_m: float = 0.4
    sigma_max: float | None = None
    sigma_factor: float | None = None  # sigma_max = factor * max tau of the initial design
    xi_tau: float = 0.1
    w_stress: float = 1.0
    tol: float = 1e-3
    slack: float = 1e-6


@dataclass
class OutputSection:
    directory: str = "out"
    stride: int = 0  # field dump every `stride` iterations; 0 keeps only first and last


@dataclass
class RunConfig:
    name: str = "custom"
    mode: str = "tfc"
    grid: GridSection = field(default_factory=GridSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    schedules: ScheduleSection = field(default_factory=ScheduleSection)
    coupling: CouplingSection = field(default_factory=CouplingSection)
    weights: WeightSection = field(default_factory=WeightSection)
    constraints: ConstraintSection = field(default_factory=ConstraintSection)
    output: OutputSection = field(default_factory=OutputSection)


SECTIONS = {f.name: f.type for f in fields(RunConfig) if f.name not in ("name", "mode")}
_SECTION_TYPES = {
    "grid": GridSection, "material": MaterialSection, "schedules": ScheduleSection,
    "coupling": CouplingSection, "weights": WeightSection, "constraints": ConstraintSection,
    "output": OutputSection,
}


# --- presets -----------------------------------------------------------------

# Presets penalize the smeared interface in the stiffness; with H linear the
# optimizer parks phi inside the smoothing band and uses it as a free grey density.
_PRESET_MATERIAL = {"heaviside_power": 3.0}

def _ex1(mode):
    return {
        "name": f"ex1-{mode}", "mode": mode,
        "material": dict(_PRESET_MATERIAL),
        "weights": {"w4": 0.01 if mode == "tfc" else 0.0, "w2_post": 0.1},
    }


def _beam2d(mode):
    return {
        "name": f"beam2d-{mode}", "mode": mode,
        "grid": {"fixture": "beam2d", "nx": 120, "ny": 40, "h": 1.0},
        "material": dict(_PRESET_MATERIAL),
        "schedules": {"D_st": 20, "D_c": 120, "D_max": 150, "rho_sh0": 0.2, "rho_th0": 0.3},
        "weights": {"w1": 0.92, "w2": 0.001, "w2_final": 0.01, "eta_w2": 3.0, "w3": 0.01,
                    "w4": 0.05 if mode == "tfc" else 0.0},
        "constraints": {"gamma_m": 0.2},
    }


def _ex1_stress():
    doc = _ex1("tfc")
    doc["name"] = "ex1-stress-tfc"
    doc["weights"]["w_psi"] = 0.005
    doc["constraints"] = {"objective": "mass", "sigma_factor": 0.6}
    return doc


PRESETS = {
    "ex1-sfc": lambda: _ex1("sfc"),
    "ex1-tfc": lambda: _ex1("tfc"),
    "beam2d-sfc": lambda: _beam2d("sfc"),
    "beam2d-tfc": lambda: _beam2d("tfc"),
    "ex1-stress-tfc": _ex1_stress,
}


# --- parsing -------------------------------------------------------------------

def _coerce(section: str, key: str, value, typ):
    where = f"{section}.{key}" if section else key
    allow_none = "None" in str(typ)
    if value is None:
        if allow_none:
            return None
        raise ConfigError(f"{where}: value required")
    base = str(typ).replace(" | None", "")
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected {base}, got boolean")
    if base == "int":
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected integer, got {value!r}")
        return value
    if base == "float":
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: value must be finite")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {typ}")  # pragma: no cover


def _merge(base: dict, doc: dict) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in doc.items():
        if isinstance(v, dict):
            out.setdefault(k, {}).update(v)
        else:
            out[k] = v
    return out


def scale_document(doc: dict, k: int) -> dict:
    """Coarsen a resolved preset by ``k``: fewer, larger elements and shorter spans."""
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ConfigError(f"scale must be a positive integer, got {k!r}")
    if k == 1:
        return doc
    g, s = doc["grid"], doc["schedules"]
    g["nx"] = max(4, g["nx"] // k)
    g["ny"] = max(4, g["ny"] // k)
    g["h"] = g["h"] * k
    s["D_st"] = max(5, s["D_st"] // k)
    s["D_c"] = max(25, s["D_c"] // k)
    s["D_max"] = max(40, s["D_max"] // k)
    return doc


def _defaults_document() -> dict:
    d = dataclasses.asdict(RunConfig())
    return d


def _resolve_lengths(cfg: RunConfig):
    h = cfg.grid.h
    c = cfg.coupling
    if c.phi_rt is None:
        c.phi_rt = 4.0 * h
    if c.r_f is None:
        c.r_f = 1.6 * h
    if cfg.mode == "sfc":
        # the level-set range follows from the affine map on [0, 1]
        c.phi_up = c.phi_rt * (1.0 - c.phi_sh) if c.phi_up is None else c.phi_up
        c.phi_low = -c.phi_rt * c.phi_sh if c.phi_low is None else c.phi_low
    else:
        c.phi_up = 2.5 * h if c.phi_up is None else c.phi_up
        c.phi_low = -2.5 * h if c.phi_low is None else c.phi_low
    if c.phi_th is None:
        c.phi_th = 0.25 * c.phi_low
    if c.phi0 is None and cfg.mode == "tfc":
        c.phi0 = 0.5 * c.phi_up


def validate(cfg: RunConfig) -> RunConfig:
    """Re-check every downstream invariant; raises ConfigError naming the field."""
    if cfg.mode not in ("sfc", "tfc"):
        raise ConfigError(f"mode: expected 'sfc' or 'tfc', got {cfg.mode!r}")
    g = cfg.grid
    if g.fixture not in FIXTURES:
        raise ConfigError(f"grid.fixture: unknown fixture {g.fixture!r}")
    if g.nx < 2 or g.ny < 2 or not g.h > 0:
        raise ConfigError("grid: need nx, ny >= 2 and h > 0")
    if not 0 < 2 * g.band < min(g.nx, g.ny):
        raise ConfigError("grid.band: must be positive and smaller than half the grid")
    m = cfg.material
    if not 0.0 < m.rho0 <= 1.0:
        raise ConfigError(f"material.rho0: must lie in (0, 1], got {m.rho0}")
    try:
        MaterialModel(m.E0, m.E_void, m.nu, m.theta0, m.beta, m.heaviside_power)
    except ConfigError as exc:
        raise ConfigError(f"material: {exc}") from None
    s = cfg.schedules
    if not 0 < s.D_st <= s.D_c:
        raise ConfigError("schedules: need 0 < D_st <= D_c")
    if s.D_max < 0:
        raise ConfigError("schedules.D_max: must be non-negative")
    if not 0.0 <= s.rho_sh0 <= 1.0:
        raise ConfigError("schedules.rho_sh0: must lie in [0, 1]")
    if s.rho_th0 < 0:
        raise ConfigError("schedules.rho_th0: must be non-negative")
    if s.eta_sh < 1 or s.eta_th < 1:
        raise ConfigError("schedules: exponents must be >= 1")
    if cfg.mode == "tfc" and s.rho_th0 >= m.rho0:
        clamped = 0.99 * m.rho0
        log.warning("schedules.rho_th0 = %g is not below rho0 = %g; clamped to %g",
                    s.rho_th0, m.rho0, clamped)
        s.rho_th0 = clamped
    c = cfg.coupling
    try:
        SfcConfig(c.phi_sh, c.phi_rt)
        TfcConfig(c.phi_th, c.phi_up, c.xi, c.phi_low)
        RegConfig(cfg.weights.w_phi1, cfg.weights.w_phi2, cfg.weights.w_grad1,
                  cfg.weights.w_grad2, cfg.weights.gamma_reg, c.phi_low, c.phi_up)
    except ConfigError as exc:
        raise ConfigError(f"coupling/weights: {exc}") from None
    if not c.r_f > 0:
        raise ConfigError("coupling.r_f: must be positive")
    if c.phi0 is not None and not c.phi_low <= c.phi0 <= c.phi_up:
        raise ConfigError("coupling.phi0: must lie within [phi_low, phi_up]")
    w = cfg.weights
    for name in ("w1", "w2", "w3", "w4", "w_psi", "w2_final", "w2_post"):
        v = getattr(w, name)
        if v is not None and v < 0:
            raise ConfigError(f"weights.{name}: must be non-negative")
    if w.eta_w2 < 1:
        raise ConfigError("weights.eta_w2: must be >= 1")
    k = cfg.constraints
    if k.objective not in ("compliance", "mass"):
        raise ConfigError(f"constraints.objective: expected 'compliance' or 'mass', got {k.objective!r}")
    if not 0.0 < k.gamma_m <= 1.0:
        raise ConfigError("constraints.gamma_m: must lie in (0, 1]")
    if k.sigma_max is not None and not k.sigma_max > 0:
        raise ConfigError("constraints.sigma_max: must be positive")
    if k.sigma_factor is not None and not k.sigma_factor > 0:
        raise ConfigError("constraints.sigma_factor: must be positive")
    if not k.xi_tau > 0 or not k.tol > 0 or k.slack < 0:
        raise ConfigError("constraints: need xi_tau > 0, tol > 0, slack >= 0")
    if cfg.output.stride < 0:
        raise ConfigError("output.stride: must be non-negative")
    return cfg


def from_document(doc: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed TOML mapping."""
    doc = dict(doc)
    preset = doc.pop("preset", None)
    scale = doc.pop("scale", 1)
    base = _defaults_document()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = _merge(base, PRESETS[preset]())
    for key, value in doc.items():
        if key in ("name", "mode"):
            if not isinstance(value, str):
                raise ConfigError(f"{key}: expected string, got {value!r}")
        elif key not in _SECTION_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        elif not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a section")
        else:
            known = {f.name for f in fields(_SECTION_TYPES[key])}
            for sub in value:
                if sub not in known:
                    raise ConfigError(f"unknown key {key}.{sub!r}")
    merged = _merge(base, doc)
    if isinstance(scale, bool) or not isinstance(scale, int):
        raise ConfigError(f"scale: expected integer, got {scale!r}")
    scale_document(merged, scale)

    kwargs = {"name": merged["name"], "mode": merged["mode"]}
    for sec, typ in _SECTION_TYPES.items():
        vals = {}
        for f in fields(typ):
            vals[f.name] = _coerce(sec, f.name, merged[sec].get(f.name), f.type)
        kwargs[sec] = typ(**vals)
    cfg = RunConfig(**kwargs)
    _resolve_lengths(cfg)
    return validate(cfg)


def parse_config(text: str) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return from_document(doc)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_config(name: str, scale: int = 1, **sections) -> RunConfig:
    doc = {"preset": name, "scale": scale}
    doc.update(sections)
    return from_document(doc)


# --- serialization -----------------------------------------------------------------

def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Fully resolved TOML; unset optional keys are omitted."""
    lines = [f"name = {_toml_value(cfg.name)}", f"mode = {_toml_value(cfg.mode)}"]
    for sec in _SECTION_TYPES:
        lines.append("")
        lines.append(f"[{sec}]")
        for f in fields(_SECTION_TYPES[sec]):
            v = getattr(getattr(cfg, sec), f.name)
            if v is not None:
                lines.append(f"{f.name} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


# --- downstream objects ----------------------------------------------------------

def build_fixture(cfg: RunConfig) -> Fixture:
    g, m = cfg.grid, cfg.material
    mat = MaterialModel(m.E0, m.E_void, m.nu, m.theta0, m.beta, m.heaviside_power)
    return FIXTURES[g.fixture](nx=g.nx, ny=g.ny, h=g.h, band=g.band, traction=g.traction,
                               material=mat)


def build_spec(cfg: RunConfig, sigma_max: float | None = None) -> ProblemSpec:
    """ProblemSpec for ``cfg``; ``sigma_max`` overrides the configured stress bound."""
    c, s, w, k = cfg.coupling, cfg.schedules, cfg.weights, cfg.constraints
    rho_sh = ContinuationSchedule(s.rho_sh0, 1.0, s.eta_sh, s.D_st, s.D_c)
    rho_th = ContinuationSchedule(s.rho_th0, 0.0, s.eta_th, s.D_st, s.D_c)
    per = None
    if w.w2_final is not None and w.w2_final != w.w2:
        per = ContinuationSchedule(w.w2, w.w2_final, w.eta_w2, s.D_st, s.D_c)
    reg = RegConfig(w.w_phi1, w.w_phi2, w.w_grad1, w.w_grad2, w.gamma_reg, c.phi_low, c.phi_up)
    return ProblemSpec(
        mode=cfg.mode,
        sfc=SfcConfig(c.phi_sh, c.phi_rt),
        tfc=TfcConfig(c.phi_th, c.phi_up, c.xi, c.phi_low),
        reg=reg, rho_sh=rho_sh, rho_th=rho_th,
        phi_low=c.phi_low, phi_up=c.phi_up, r_f=c.r_f,
        rho0=cfg.material.rho0, phi0=c.phi0, objective=k.objective,
        w_F=w.w1, w_per=w.w2, w_reg=w.w3, w_coupling=w.w4 if cfg.mode == "tfc" else 0.0,
        w_psi=w.w_psi, per_schedule=per, w_per_post=w.w2_post, gamma_m=k.gamma_m,
        sigma_max=sigma_max if sigma_max is not None else k.sigma_max,
        xi_tau=k.xi_tau, w_stress=k.w_stress, gamma_s=c.gamma_s, tol=k.tol, D_max=s.D_max,
        slack=k.slack,
    )


def needs_stress_calibration(cfg: RunConfig) -> bool:
    return cfg.constraints.sigma_max is None and cfg.constraints.sigma_factor is not None
