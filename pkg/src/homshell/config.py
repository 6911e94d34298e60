"""Run-configuration grammar: bracketed sections of `key = value` lines.

The key set is normative: unknown keys, missing required keys and
cross-field inconsistencies all fail with the offending location.  Paper
units (cm-based geometry, GPa stiffness, per-cm^3 loads) are converted to
the internal unit system on ingest; the internal system uses the declared
geometry unit as its length unit so that a single numeric cell size can
divide mixed length/angle axes exactly as the source experiments do.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import CurvilinearFrame, MacroDomain, UnitCell
from .macro import LoadSpec, TimeSchemeParams
from .materials import PARAM_KEYS, PhasePolynomials, TwoPhaseMaterial

log = logging.getLogger("homshell.config")

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _parse_text(text, source="<config>"):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside any section")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key "
                              f"{current}.{key}")
        sections[current][key] = (val, lineno)
    return sections


class _Section:
    def __init__(self, name, data, source):
        self.name = name
        self.data = dict(data)
        self.source = source

    def take(self, key, default=None, required=False, cast=str):
        if key not in self.data:
            if required:
                raise ConfigError(f"missing key {self.name}.{key}")
            return default
        val, lineno = self.data.pop(key)
        try:
            return cast(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"{self.source}:{lineno}: bad value for "
                f"{self.name}.{key}: {exc}") from exc

    def finish(self):
        if self.data:
            key, (_, lineno) = next(iter(self.data.items()))
            raise ConfigError(f"{self.source}:{lineno}: unknown key "
                              f"{self.name}.{key}")


def _floats(val):
    return tuple(float(x) for x in val.split(","))


def _strings(val):
    return tuple(s.strip() for s in val.split(",") if s.strip())


@dataclass
class Sampling:
    tbar_count: int = 5
    alpha3_count: int = 1
    cell_divisions: int = 8
    macro_divisions: tuple = (8, 8, 8)
    dns_divisions_per_cell: int = 8


@dataclass
class OutputSpec:
    stride: int = 1
    directory: str = "out"


@dataclass
class RunConfig:
    frame: CurvilinearFrame
    domain: MacroDomain
    unitcell: UnitCell
    material: TwoPhaseMaterial      # already in internal units
    loads: LoadSpec                 # already in internal units
    params: TimeSchemeParams
    sampling: Sampling
    output: OutputSpec
    unit: str = "cm"
    bc_temp_faces: dict = field(default_factory=dict)


def _material_factors(unit_scale):
    """Table-unit -> internal-unit multipliers (lengths in `unit_scale` m)."""
    U = unit_scale
    return {
        "density": U ** 3,
        "youngs_modulus": 1e9 * U,       # config carries GPa
        "thermal_modulus": U,
        "specific_heat": U ** -2,
        "conductivity": U ** -1,
        "two_way_modulus": U,
    }


def _phase_from(sec):
    vals = {}
    for key in PARAM_KEYS:
        if key == "poisson":
            vals[key] = sec.take(key, required=True, cast=float)
        else:
            vals[key] = sec.take(key, required=True, cast=_floats)
    sec.finish()
    return PhasePolynomials.from_dict(vals)


def parse_config(path):
    with open(path) as f:
        text = f.read()
    return parse_config_text(text, source=str(path))


def parse_config_text(text, source="<config>"):
    secs = _parse_text(text, source)

    def section(name, required=True):
        if name not in secs:
            if required:
                raise ConfigError(f"missing section [{name}]")
            return _Section(name, {}, source)
        return _Section(name, secs.pop(name), source)

    g = section("geometry")
    kind = g.take("frame", required=True)
    r1 = g.take("r1", 0.0, cast=float)
    r2 = g.take("r2", 0.0, cast=float)
    try:
        frame = CurvilinearFrame(kind, r1=r1, r2=r2)
    except ValueError as exc:
        raise ConfigError(f"geometry.frame: {exc}") from exc
    lo = g.take("box_lo", required=True, cast=_floats)
    hi = g.take("box_hi", required=True, cast=_floats)
    xi = g.take("xi", required=True, cast=float)
    unit = g.take("unit", "cm")
    if unit not in ("cm", "m"):
        raise ConfigError("geometry.unit must be 'cm' or 'm'")
    inclusion = g.take("inclusion", required=True)
    radius = g.take("radius", 0.35, cast=float)
    axis = g.take("laminate_axis", 1, cast=int)
    interfaces = g.take("interfaces", (0.5,), cast=_floats)
    try:
        unitcell = UnitCell(inclusion, radius=radius, axis=axis - 1,
                            interfaces=tuple(interfaces))
    except ValueError as exc:
        raise ConfigError(f"geometry inclusion: {exc}") from exc
    g.finish()

    m = section("material")
    t_min = m.take("t_min", required=True, cast=float)
    t_max = m.take("t_max", required=True, cast=float)
    theta_mode = m.take("theta_mode", "table")
    if theta_mode not in ("table", "linearized"):
        raise ConfigError("material.theta_mode must be table or linearized")
    m.finish()
    matrix = _phase_from(section("material.matrix"))
    incl = _phase_from(section("material.inclusion"))

    U = 0.01 if unit == "cm" else 1.0
    factors = _material_factors(U)
    material = TwoPhaseMaterial(matrix.scaled(factors), incl.scaled(factors),
                                t_min, t_max, theta_mode=theta_mode)
    log.info("material converted to internal units (length unit %s m): %s",
             U, {k: f"{v:g}" for k, v in factors.items()})

    lsec = section("loads")
    t_ref = lsec.take("t_ref", required=True, cast=float)
    body = lsec.take("body_force", (0.0, 0.0, 0.0), cast=_floats)
    heat = lsec.take("heat_source", 0.0, cast=float)
    disp_faces = lsec.take("bc_disp_faces", (), cast=_strings)
    bc_temp = lsec.take("bc_temp", "", cast=str)
    u0 = lsec.take("u0", (0.0, 0.0, 0.0), cast=_floats)
    v0 = lsec.take("v0", (0.0, 0.0, 0.0), cast=_floats)
    lsec.finish()

    bc_temp_faces = {}
    if bc_temp:
        for item in bc_temp.split(","):
            if ":" not in item:
                raise ConfigError(
                    "loads.bc_temp entries must be face:value pairs")
            face, value = item.split(":", 1)
            face = face.strip()
            if face not in FACES:
                raise ConfigError(f"loads.bc_temp: unknown face {face!r}")
            bc_temp_faces[face] = float(value)
    for f_ in disp_faces:
        if f_ not in FACES:
            raise ConfigError(f"loads.bc_disp_faces: unknown face {f_!r}")

    # load conversion: per-volume sources live in paper units when unit=cm
    body_int = tuple(b * 1e6 * U * U for b in body) if unit == "cm" \
        else tuple(body)
    heat_int = heat * 1e6 * U if unit == "cm" else heat
    if unit == "cm":
        log.info("loads converted: body force x %.3g, heat source x %.3g",
                 1e6 * U * U, 1e6 * U)

    t = section("time")
    params = TimeSchemeParams(
        dt=t.take("dt", required=True, cast=float),
        steps=t.take("steps", required=True, cast=int),
        delta=t.take("delta", 1.0, cast=float),
        gamma=t.take("gamma", 0.6, cast=float),
        omega=t.take("omega", 0.35, cast=float),
        varpi=t.take("varpi", 1.0, cast=float),
        tol_nl=t.take("tol_nl", 1e-8, cast=float),
        max_nl=t.take("max_nl", 50, cast=int),
    )
    t.finish()

    s = section("sampling")
    sampling = Sampling(
        tbar_count=s.take("tbar_count", 5, cast=int),
        alpha3_count=s.take("alpha3_count", 1, cast=int),
        cell_divisions=s.take("cell_divisions", 8, cast=int),
        macro_divisions=s.take("macro_divisions", required=True,
                               cast=lambda v: tuple(int(x) for x in
                                                    v.split(","))),
        dns_divisions_per_cell=s.take("dns_divisions_per_cell", 8, cast=int),
    )
    s.finish()

    o = section("output", required=False)
    output = OutputSpec(stride=o.take("stride", 1, cast=int),
                        directory=o.take("directory", "out"))
    o.finish()

    if secs:
        raise ConfigError(f"unknown section [{next(iter(secs))}]")

    try:
        domain = MacroDomain(tuple(lo), tuple(hi), xi,
                             dirichlet_u=tuple(disp_faces),
                             dirichlet_t=tuple(bc_temp_faces))
    except ValueError as exc:
        raise ConfigError(f"geometry box: {exc}") from exc
    for axis_ in range(3):
        if sampling.macro_divisions[axis_] < 1:
            raise ConfigError("sampling.macro_divisions must be positive")
    if not (t_min <= t_ref <= t_max):
        raise ConfigError("loads.t_ref outside material temperature range")
    for face, value in bc_temp_faces.items():
        if not (t_min <= value <= t_max):
            raise ConfigError(
                f"loads.bc_temp {face}:{value} outside material range")

    def bc_temp_fn(pts, t_):
        out = np.full(pts.shape[0], t_ref)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(hi))))
        for face, value in bc_temp_faces.items():
            ax = "xyz".index(face[0])
            target = lo[ax] if face[1] == "-" else hi[ax]
            out[np.abs(pts[:, ax] - target) <= tol] = value
        return out

    loads = LoadSpec(body_force=body_int, heat_source=heat_int,
                     bc_disp=(0.0, 0.0, 0.0), bc_temp=bc_temp_fn,
                     u0=tuple(u0), v0=tuple(v0), t_ref=t_ref)

    return RunConfig(frame=frame, domain=domain, unitcell=unitcell,
                     material=material, loads=loads, params=params,
                     sampling=sampling, output=output, unit=unit,
                     bc_temp_faces=bc_temp_faces)
