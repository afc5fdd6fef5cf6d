"""Simulation configuration: a flat ``section.key = value`` text format.

Blank lines and ``#`` comments are ignored. Every key has a default, so an
empty file describes the reference scenario. Unknown keys are errors. The
``bc``, ``pdgf_flux`` and ``smc_flux`` sections take boundary tags as keys::

    time.dt = 0.005
    transport.D_P = 2e-2
    initial.centers = 1.5 1.5; 1.5 3.0      # x y pairs, or "auto"
    bc.left = fixed
    pdgf_flux.inner = 1e-12
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .constitutive import MaterialParams
from .transport import TransportParams


class ConfigError(ValueError):
    """Invalid configuration text or values."""


@dataclass(frozen=True)
class MeshConfig:
    file: str = ""               # mesh file; empty means the structured strip
    mode: str = "axisym"
    length: float = 6.0          # mm
    thickness: float = 0.8       # mm
    inner_radius: float = 1.5    # mm
    nx: int = 60
    ny: int = 8
    element: str = "quad"
    tri_points: int = 3


@dataclass(frozen=True)
class TimeConfig:
    dt: float = 0.01             # day
    t_end: float = 1.0
    dt_min: float = 1.0e-4
    output_every: float = 0.1


@dataclass(frozen=True)
class InitialConfig:
    rho_E0: float = 7.0e-9       # mol/mm^3
    rho_S0: float = 3.16e6       # cells/mm^3
    centers: tuple | None = field(default=None, metadata={"kind": "points"})
    sigma: tuple = (0.2,)        # mm, one value or one per peak
    amplitude: tuple = (1.0e-11,)


@dataclass(frozen=True)
class GrowthConfig:
    dimension: int = 0           # 0 picks 3 (axisymmetric) or 2 (plane)


@dataclass(frozen=True)
class StabilizationConfig:
    method: str = "fct"
    prelimit: bool = True
    pdgf: bool = True


@dataclass(frozen=True)
class NewtonConfig:
    max_iters: int = 25
    atol: float = 1e-10
    rtol: float = 1e-8


@dataclass(frozen=True)
class OutputConfig:
    vtk: bool = True
    section_tag: str = "inner"
    section_points: int = 241
    probes: tuple | None = field(default=None, metadata={"kind": "points"})


@dataclass(frozen=True)
class SimulationConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    transport: TransportParams = field(default_factory=TransportParams)
    material: MaterialParams = field(default_factory=MaterialParams)
    initial: InitialConfig = field(default_factory=InitialConfig)
    growth: GrowthConfig = field(default_factory=GrowthConfig)
    stabilization: StabilizationConfig = field(default_factory=StabilizationConfig)
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    bc: dict = field(default_factory=lambda: {"left": "fixed", "right": "fixed"})
    pdgf_flux: dict = field(default_factory=dict)
    smc_flux: dict = field(default_factory=dict)

    def replace(self, **sections) -> "SimulationConfig":
        """Copy with ``section={key: value}`` overrides, validated."""
        cfg = self
        for name, values in sections.items():
            current = getattr(cfg, name)
            if isinstance(current, dict):
                new = {**current, **values}
            else:
                new = dataclasses.replace(current, **values)
            cfg = dataclasses.replace(cfg, **{name: new})
        validate(cfg)
        return cfg


_TAG_SECTIONS = ("bc", "pdgf_flux", "smc_flux")
_BC_KINDS = ("fixed", "fix_0", "fix_1", "free")


def _kind(f: dataclasses.Field) -> str:
    if "kind" in f.metadata:
        return f.metadata["kind"]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    return {bool: "bool", int: "int", float: "float", str: "str", tuple: "floats"}[type(default)]


def _parse_value(kind: str, text: str):
    text = text.strip()
    if kind == "float":
        return float(text)
    if kind == "int":
        value = float(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if kind == "bool":
        low = text.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if kind == "str":
        return text
    if kind == "floats":
        items = [s for s in text.replace(",", " ").split()]
        if not items:
            raise ValueError("expected at least one number")
        return tuple(float(s) for s in items)
    if kind == "points":
        if text.lower() == "auto":
            return None
        points = []
        for chunk in text.split(";"):
            if not chunk.strip():
                continue
            xy = chunk.replace(",", " ").split()
            if len(xy) != 2:
                raise ValueError(f"expected 'x y' pairs separated by ';', got {chunk.strip()!r}")
            points.append((float(xy[0]), float(xy[1])))
        return tuple(points)
    raise AssertionError(kind)


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "points":
        return "auto" if value is None else "; ".join(f"{x!r} {y!r}" for x, y in value)
    return str(value)


def parse_text(text: str, source: str = "<string>") -> SimulationConfig:
    """Parse configuration text (see module docstring)."""
    base = SimulationConfig()
    sections: dict[str, dict] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if "." not in key:
            raise ConfigError(f"{where}: key {key!r} has no section")
        section, name = key.split(".", 1)
        if section in _TAG_SECTIONS:
            try:
                parsed = value if section == "bc" else float(value)
            except ValueError as exc:
                raise ConfigError(f"{where}: {key}: {exc}") from None
        else:
            sub = getattr(base, section, None)
            if sub is None or not dataclasses.is_dataclass(sub):
                raise ConfigError(f"{where}: unknown section {section!r} in key {key!r}")
            fields = {f.name: f for f in dataclasses.fields(sub)}
            if name not in fields:
                raise ConfigError(f"{where}: unknown key {key!r}")
            try:
                parsed = _parse_value(_kind(fields[name]), value)
            except ValueError as exc:
                raise ConfigError(f"{where}: {key}: {exc}") from None
        if key in lines:
            raise ConfigError(f"{where}: {key} already set on line {lines[key]}")
        lines[key] = lineno
        sections.setdefault(section, {})[name] = parsed

    cfg = base
    for section, values in sections.items():
        current = getattr(base, section)
        try:
            if isinstance(current, dict):
                new = {**current, **values}
            else:
                new = dataclasses.replace(current, **values)
        except ValueError as exc:
            # the parameter classes validate themselves; find the culprit key
            for name, value in values.items():
                try:
                    dataclasses.replace(current, **{name: value})
                except ValueError:
                    key = f"{section}.{name}"
                    raise ConfigError(f"{source}:{lines[key]}: {key}: {exc}") from None
            raise ConfigError(f"{source}: {section}: {exc}") from None
        cfg = dataclasses.replace(cfg, **{section: new})
    try:
        validate(cfg)
    except ConfigError as exc:
        key = getattr(exc, "key", None)
        if key in lines:
            raise ConfigError(f"{source}:{lines[key]}: {exc}") from None
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def parse_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, str(path))


def serialize(cfg: SimulationConfig) -> str:
    """Text form listing every key; ``parse_text(serialize(c)) == c``."""
    out = []
    for top in dataclasses.fields(cfg):
        sub = getattr(cfg, top.name)
        if isinstance(sub, dict):
            for tag, value in sub.items():
                out.append(f"{top.name}.{tag} = {value if top.name == 'bc' else repr(float(value))}")
            continue
        for f in dataclasses.fields(sub):
            out.append(f"{top.name}.{f.name} = {_format_value(_kind(f), getattr(sub, f.name))}")
    return "\n".join(out) + "\n"


def _fail(key: str, message: str):
    err = ConfigError(f"{key}: {message}")
    err.key = key
    raise err


def validate(cfg: SimulationConfig) -> None:
    """Raise ``ConfigError`` naming the offending key."""
    m, t, ini = cfg.mesh, cfg.time, cfg.initial
    if m.mode not in ("plane", "axisym", "axisymmetric"):
        _fail("mesh.mode", f"expected plane or axisym, got {m.mode!r}")
    if m.element not in ("quad", "tri"):
        _fail("mesh.element", f"expected quad or tri, got {m.element!r}")
    if m.tri_points not in (1, 3):
        _fail("mesh.tri_points", "expected 1 or 3")
    for name in ("length", "thickness"):
        if not getattr(m, name) > 0:
            _fail(f"mesh.{name}", "must be > 0")
    if m.inner_radius < 0:
        _fail("mesh.inner_radius", "must be >= 0")
    if (m.mode != "plane" and not m.file and m.inner_radius <= 0):
        _fail("mesh.inner_radius", "must be > 0 in axisymmetric mode")
    for name in ("nx", "ny"):
        if getattr(m, name) < 1:
            _fail(f"mesh.{name}", "must be >= 1")

    if not t.dt > 0:
        _fail("time.dt", "must be > 0")
    if not t.dt_min > 0:
        _fail("time.dt_min", "must be > 0")
    if t.dt_min > t.dt:
        _fail("time.dt_min", "must not exceed time.dt")
    if t.t_end < 0:
        _fail("time.t_end", "must be >= 0")
    if t.t_end > 0 and t.dt > t.t_end:
        _fail("time.dt", "must not exceed time.t_end")
    if not t.output_every > 0:
        _fail("time.output_every", "must be > 0")
    if abs(t.output_every / t.dt - round(t.output_every / t.dt)) > 1e-9 * t.output_every / t.dt:
        _fail("time.output_every", "must be a whole multiple of time.dt")
    if t.t_end > 0 and abs(t.t_end / t.dt - round(t.t_end / t.dt)) > 1e-9 * t.t_end / t.dt:
        _fail("time.t_end", "must be a whole multiple of time.dt")

    for f in dataclasses.fields(cfg.transport):
        if not getattr(cfg.transport, f.name) >= 0:
            _fail(f"transport.{f.name}", "must be >= 0")
    for name in ("rho_E_th", "rho_S_h"):
        if not getattr(cfg.transport, name) > 0:
            _fail(f"transport.{name}", "must be > 0")

    if not 0 <= ini.rho_E0 <= cfg.transport.rho_E_th:
        _fail("initial.rho_E0", "must lie in [0, transport.rho_E_th]")
    if not ini.rho_S0 >= 0:
        _fail("initial.rho_S0", "must be >= 0")
    n_peaks = 3 if ini.centers is None else len(ini.centers)
    for name in ("sigma", "amplitude"):
        values = getattr(ini, name)
        if len(values) not in (1, n_peaks):
            _fail(f"initial.{name}", f"give one value or one per peak ({n_peaks})")
    if any(s <= 0 for s in ini.sigma):
        _fail("initial.sigma", "must be > 0")
    if any(a < 0 for a in ini.amplitude):
        _fail("initial.amplitude", "must be >= 0")

    if cfg.growth.dimension not in (0, 2, 3):
        _fail("growth.dimension", "expected 0 (automatic), 2 or 3")
    if cfg.stabilization.method not in ("fct", "none"):
        _fail("stabilization.method", f"expected fct or none, got {cfg.stabilization.method!r}")
    if cfg.newton.max_iters < 1:
        _fail("newton.max_iters", "must be >= 1")
    if not (cfg.newton.atol > 0 and cfg.newton.rtol > 0):
        _fail("newton.atol", "tolerances must be > 0")
    if cfg.output.section_points < 2:
        _fail("output.section_points", "must be >= 2")
    for tag, kind in cfg.bc.items():
        if kind not in _BC_KINDS:
            _fail(f"bc.{tag}", f"expected one of {', '.join(_BC_KINDS)}, got {kind!r}")
    for section in ("pdgf_flux", "smc_flux"):
        for tag, value in getattr(cfg, section).items():
            if value < 0:
                _fail(f"{section}.{tag}", "influx must be >= 0")
