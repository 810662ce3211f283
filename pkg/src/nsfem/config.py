"""INI case files: parsing with strict key checking, defaults and round-tripping.

Sections and keys (all optional; defaults in brackets)::

    [case]      kind [mms]  (mms | cylinder | custom)
    [mesh]      source [generate] (generate | file), element [q1] (q1 | p2p1),
                n [64], file
    [scheme]    variant [ga] (bdf1 | bdf2 | ga), rho_inf [0], dt [0.1],
                t_end [5], convection [proposed], tangent [frozen]
    [material]  rho [1], mu [0.02]
    [stabilization] enabled [auto] (auto | on | off)
    [mms]       dts, convections, schemes, exact_initial_acceleration,
                floor_dt, floor_factor, min_slope
    [cylinder]  re, v_inf, diameter, ramp_time, perturbation,
                perturbation_start, perturbation_end, window_fraction,
                cl_range, st_range
    [output]    snapshot_every [0], write_final_fields [yes]
    [bc.NAME]   kind (dirichlet | slip | traction), value (vx, vy), ramp_time

Relative mesh paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .forms import Convection
from .timeint import VARIANTS, ga_parameters


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class MeshConfig:
    source: str = "generate"
    element: str = "q1"
    n: int = 64
    file: str = ""


@dataclass
class SchemeConfig:
    variant: str = "ga"
    rho_inf: float = 0.0
    dt: float = 0.1
    t_end: float = 5.0
    convection: str = "proposed"
    tangent: str = "frozen"


@dataclass
class MaterialConfig:
    rho: float = 1.0
    mu: float = 0.02


@dataclass
class StabilizationSection:
    enabled: str = "auto"


@dataclass
class MmsConfig:
    dts: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05, 0.025)
    convections: tuple[str, ...] = ("proposed",)
    schemes: tuple[str, ...] = ("ga:0",)
    exact_initial_acceleration: bool = True
    floor_dt: float = 0.0
    floor_factor: float = 5.0
    min_slope: float | None = None


@dataclass
class CylinderConfig:
    re: float = 100.0
    v_inf: float = 1.0
    diameter: float = 1.0
    ramp_time: float = 1.0
    perturbation: float = 0.5
    perturbation_start: float = 2.0
    perturbation_end: float = 6.0
    window_fraction: float = 0.25
    cl_range: tuple[float, ...] = ()
    st_range: tuple[float, ...] = ()


@dataclass
class OutputConfig:
    snapshot_every: int = 0
    write_final_fields: bool = True


@dataclass
class BCConfig:
    patch: str
    kind: str
    value: tuple[float, ...] = (0.0, 0.0)
    ramp_time: float = 0.0


@dataclass
class CaseConfig:
    kind: str = "mms"
    mesh: MeshConfig = field(default_factory=MeshConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    material: MaterialConfig = field(default_factory=MaterialConfig)
    stabilization: StabilizationSection = field(default_factory=StabilizationSection)
    mms: MmsConfig = field(default_factory=MmsConfig)
    cylinder: CylinderConfig = field(default_factory=CylinderConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    bcs: list[BCConfig] = field(default_factory=list)
    base_dir: str = field(default=".", compare=False)

    @property
    def stabilized(self) -> bool:
        if self.stabilization.enabled == "auto":
            return self.mesh.element == "q1"
        return self.stabilization.enabled == "on"

    def mesh_path(self) -> Path:
        return Path(self.mesh.file)


SECTIONS = {
    "mesh": MeshConfig,
    "scheme": SchemeConfig,
    "material": MaterialConfig,
    "stabilization": StabilizationSection,
    "mms": MmsConfig,
    "cylinder": CylinderConfig,
    "output": OutputConfig,
}

_TRUE = {"1", "yes", "true", "on"}
_FALSE = {"0", "no", "false", "off"}


def _convert(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], str):
                return tuple(items)
            return tuple(float(s) for s in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _read_section(cls, items: dict, name: str):
    obj = cls()
    known = {f.name: f for f in fields(cls)}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown key")
        default = getattr(obj, key)
        if known[key].type in ("tuple[float, ...]",) and not default:
            value = tuple(float(s) for s in raw.split(",") if s.strip())
        elif known[key].type == "float | None":
            value = None if raw.strip().lower() in ("", "none") else _convert(raw, 0.0, f"{name}.{key}")
        else:
            value = _convert(raw, default, f"{name}.{key}")
        setattr(obj, key, value)
    return obj


def _read_bc(name: str, items: dict) -> BCConfig:
    allowed = {"kind", "value", "ramp_time"}
    for key in items:
        if key not in allowed:
            raise ConfigError(f"bc.{name}.{key}: unknown key")
    if "kind" not in items:
        raise ConfigError(f"bc.{name}.kind: missing")
    bc = BCConfig(name, items["kind"].strip().lower())
    if "value" in items:
        bc.value = _convert(items["value"], (0.0,), f"bc.{name}.value")
    if "ramp_time" in items:
        bc.ramp_time = _convert(items["ramp_time"], 0.0, f"bc.{name}.ramp_time")
    return bc


def parse_config_text(text: str, base_dir=".") -> CaseConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax: {exc}") from None
    cfg = CaseConfig(base_dir=str(base_dir))
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "case":
            for key in items:
                if key != "kind":
                    raise ConfigError(f"case.{key}: unknown key")
            cfg.kind = items.get("kind", cfg.kind).strip().lower()
        elif sec.startswith("bc."):
            cfg.bcs.append(_read_bc(sec[3:], items))
        elif sec in SECTIONS:
            setattr(cfg, sec, _read_section(SECTIONS[sec], items, sec))
        else:
            raise ConfigError(f"{sec}: unknown section")
    if cfg.mesh.file and not Path(cfg.mesh.file).is_absolute():
        cfg.mesh.file = str((Path(base_dir) / cfg.mesh.file).resolve())
    validate(cfg)
    return cfg


def parse_config(path) -> CaseConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text, path.resolve().parent)


def validate(cfg: CaseConfig) -> None:
    if cfg.kind not in ("mms", "cylinder", "custom"):
        raise ConfigError(f"case.kind: expected mms, cylinder or custom, got {cfg.kind!r}")
    m = cfg.mesh
    if m.source not in ("generate", "file"):
        raise ConfigError("mesh.source: expected generate or file")
    if m.element not in ("q1", "p2p1"):
        raise ConfigError("mesh.element: expected q1 or p2p1")
    if m.source == "generate" and m.n < 1:
        raise ConfigError("mesh.n: must be at least 1")
    if m.source == "file" and not m.file:
        raise ConfigError("mesh.file: required when mesh.source = file")
    s = cfg.scheme
    if s.variant not in VARIANTS:
        raise ConfigError(f"scheme.variant: expected one of {', '.join(VARIANTS)}")
    try:
        ga_parameters(s.rho_inf)
    except ValueError as exc:
        raise ConfigError(f"scheme.rho_inf: {exc}") from None
    if not s.dt > 0:
        raise ConfigError("scheme.dt: must be positive")
    if s.t_end < 0:
        raise ConfigError("scheme.t_end: must be non-negative")
    try:
        Convection.parse(s.convection)
    except ValueError:
        raise ConfigError(f"scheme.convection: unknown treatment {s.convection!r}") from None
    if s.tangent not in ("frozen", "exact"):
        raise ConfigError("scheme.tangent: expected frozen or exact")
    if not (cfg.material.rho > 0 and cfg.material.mu > 0):
        raise ConfigError("material: rho and mu must be positive")
    if cfg.stabilization.enabled not in ("auto", "on", "off"):
        raise ConfigError("stabilization.enabled: expected auto, on or off")
    if m.element == "p2p1" and cfg.stabilization.enabled == "on":
        raise ConfigError(
            "stabilization.enabled: the P2-P1 pair is inf-sup stable and is used "
            "without SUPG/PSPG terms; set enabled = off or auto"
        )
    if m.element == "q1" and cfg.stabilization.enabled == "off":
        raise ConfigError("stabilization.enabled: equal-order Q1Q1 needs PSPG stabilisation")
    mm = cfg.mms
    if not mm.dts or any(d <= 0 for d in mm.dts):
        raise ConfigError("mms.dts: need positive time steps")
    if mm.floor_dt < 0 or mm.floor_factor <= 0:
        raise ConfigError("mms.floor_dt / mms.floor_factor: must be non-negative / positive")
    for c in mm.convections:
        try:
            Convection.parse(c)
        except ValueError:
            raise ConfigError(f"mms.convections: unknown treatment {c!r}") from None
    for sch in mm.schemes:
        try:
            parse_scheme_token(sch)
        except ValueError as exc:
            raise ConfigError(f"mms.schemes: {exc}") from None
    cy = cfg.cylinder
    if not (cy.re > 0 and cy.v_inf > 0 and cy.diameter > 0):
        raise ConfigError("cylinder: re, v_inf and diameter must be positive")
    if not 0 < cy.window_fraction <= 1:
        raise ConfigError("cylinder.window_fraction: must lie in (0, 1]")
    for key in ("cl_range", "st_range"):
        r = getattr(cy, key)
        if r and (len(r) != 2 or r[0] > r[1]):
            raise ConfigError(f"cylinder.{key}: expected 'low, high'")
    if cfg.output.snapshot_every < 0:
        raise ConfigError("output.snapshot_every: must be non-negative")
    for bc in cfg.bcs:
        if bc.kind not in ("dirichlet", "slip", "traction"):
            raise ConfigError(f"bc.{bc.patch}.kind: expected dirichlet, slip or traction")
        if len(bc.value) != 2:
            raise ConfigError(f"bc.{bc.patch}.value: expected two components")
    if cfg.kind == "custom" and not cfg.bcs:
        raise ConfigError("bc: a custom case needs at least one [bc.PATCH] section")


def parse_scheme_token(token: str) -> tuple[str, float]:
    """``"ga:0.5"`` -> ``("ga", 0.5)``; ``"bdf1"`` -> ``("bdf1", 0.0)``."""
    name, _, rest = token.strip().lower().partition(":")
    if name not in VARIANTS:
        raise ValueError(f"unknown scheme {token!r}")
    rho_inf = float(rest) if rest else 0.0
    ga_parameters(rho_inf)
    return name, rho_inf


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def config_to_text(cfg: CaseConfig) -> str:
    """Effective configuration with every key spelled out."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["case"] = {"kind": cfg.kind}
    for name in SECTIONS:
        cp[name] = {k: _fmt(v) for k, v in asdict(getattr(cfg, name)).items()}
    for bc in cfg.bcs:
        cp[f"bc.{bc.patch}"] = {"kind": bc.kind, "value": _fmt(bc.value), "ramp_time": _fmt(bc.ramp_time)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def write_config(cfg: CaseConfig, path) -> None:
    Path(path).write_text(config_to_text(cfg))
