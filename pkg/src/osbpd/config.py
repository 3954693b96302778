"""Scenario configuration: TOML in, validated dataclasses out.

All quantities are SI. The schema is documented in ``docs/config.md``; every
validation problem is reported with its dotted field path, and all problems
are collected before raising so a config can be fixed in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .kernels import KernelMode
from .material import DimensionMode, MaterialParams, stable_time_step


class ConfigError(ValueError):
    """One or more config problems, each prefixed by its field path."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario config:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def contains(self, x, tol: float = 0.0):
        import numpy as np

        lo = np.asarray(self.lower) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((x >= lo) & (x <= hi), axis=1)


@dataclass(frozen=True)
class Region:
    """Node selector: a union of boxes, or every node."""

    boxes: tuple = ()
    everything: bool = False

    def select(self, x, tol: float):
        import numpy as np

        if self.everything:
            return np.arange(x.shape[0])
        mask = np.zeros(x.shape[0], dtype=bool)
        for b in self.boxes:
            mask |= b.contains(x, tol)
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class TimeSpec:
    kind: str = "constant"
    omega: float = 0.0
    ramp_time: float = 0.0


@dataclass(frozen=True)
class TractionSpec:
    name: str
    region: Region
    direction: tuple
    stress: float
    area: float
    time: TimeSpec


@dataclass(frozen=True)
class BodyForceSpec:
    name: str
    region: Region
    direction: tuple
    density: float
    time: TimeSpec


@dataclass(frozen=True)
class DofSpec:
    """Fixed, velocity or prescribed-increment constraint on some components."""

    name: str
    region: Region
    components: tuple
    value: float = 0.0


@dataclass(frozen=True)
class PreCrackSpec:
    points: tuple
    width: float = 0.0


@dataclass(frozen=True)
class IntegratorSpec:
    kind: str                     # "explicit" | "adr"
    dt: float = 0.0
    steps: int = 0
    iterations: int = 0
    tol: float = 0.0
    check_every: int = 1
    density_factor: float = 1.1
    failure_every: int = 1


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "output"
    probes: tuple = ()
    probe_every: int = 1
    snapshot_every: int = 500
    formats: tuple = ("vtk", "csv")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mode: DimensionMode
    lower: tuple
    upper: tuple
    thickness: float
    add: tuple
    remove: tuple
    dx: float
    delta: float
    m_ratio: float
    material: MaterialParams
    fixed: tuple
    tractions: tuple
    body_forces: tuple
    velocities: tuple
    prescribed: tuple
    precracks: tuple
    no_fail: Region | None
    integrator: IntegratorSpec
    kernel: KernelMode
    fracture: bool
    geometric_stretch: bool
    output: OutputSpec
    source: str | None = None

    @property
    def dim(self) -> int:
        return self.mode.dim

    @property
    def time_step_bound(self) -> float:
        return stable_time_step(self.material, self.delta)


class _Reader:
    """Typed accessors over a nested dict that record problems instead of raising."""

    def __init__(self):
        self.problems: list[str] = []

    def fail(self, path: str, msg: str) -> None:
        self.problems.append(f"{path}: {msg}")

    def table(self, data: dict, key: str, path: str, required: bool = True) -> dict:
        if key not in data:
            if required:
                self.fail(f"{path}{key}", "missing section")
            return {}
        value = data[key]
        if not isinstance(value, dict):
            self.fail(f"{path}{key}", "must be a table")
            return {}
        return value

    def tables(self, data: dict, key: str, path: str) -> list:
        value = data.get(key, [])
        if isinstance(value, dict):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
            self.fail(f"{path}{key}", "must be an array of tables")
            return []
        return value

    def number(self, data: dict, key: str, path: str, default=None, positive=False,
               nonneg=False, integer=False):
        full = f"{path}{key}"
        if key not in data:
            if default is None:
                self.fail(full, "missing value")
                return math.nan if not integer else 0
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(full, f"expected a number, got {v!r}")
            return math.nan if not integer else 0
        if integer and (not isinstance(v, int) and not float(v).is_integer()):
            self.fail(full, f"expected an integer, got {v!r}")
            return 0
        if not math.isfinite(v):
            self.fail(full, f"must be finite, got {v!r}")
        elif positive and not v > 0:
            self.fail(full, f"must be positive, got {v!r}")
        elif nonneg and v < 0:
            self.fail(full, f"must be non-negative, got {v!r}")
        return int(v) if integer else float(v)

    def vector(self, data: dict, key: str, path: str, length: int | None, default=None):
        full = f"{path}{key}"
        if key not in data:
            if default is None:
                self.fail(full, "missing value")
                return None
            return tuple(default)
        v = data[key]
        if (not isinstance(v, list) or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                                               for c in v)):
            self.fail(full, f"expected a list of numbers, got {v!r}")
            return None
        if length is not None and len(v) != length:
            self.fail(full, f"expected {length} components, got {len(v)}")
            return None
        return tuple(float(c) for c in v)

    def string(self, data: dict, key: str, path: str, default=None, choices=None):
        full = f"{path}{key}"
        if key not in data:
            if default is None:
                self.fail(full, "missing value")
            return default
        v = data[key]
        if not isinstance(v, str):
            self.fail(full, f"expected a string, got {v!r}")
            return default
        if choices is not None and v.lower() not in choices:
            self.fail(full, f"must be one of {sorted(choices)}, got {v!r}")
            return default
        return v

    def boolean(self, data: dict, key: str, path: str, default: bool) -> bool:
        v = data.get(key, default)
        if not isinstance(v, bool):
            self.fail(f"{path}{key}", f"expected true or false, got {v!r}")
            return default
        return v


def _box(r: _Reader, data: dict, path: str, d: int) -> Box | None:
    lo = r.vector(data, "lower", path, d)
    hi = r.vector(data, "upper", path, d)
    if lo is None or hi is None:
        return None
    if any(h < l for l, h in zip(lo, hi)):
        r.fail(f"{path}upper", "every component must be >= the matching lower component")
        return None
    return Box(lo, hi)


def _region(r: _Reader, data: dict, path: str, d: int) -> Region:
    if "region" not in data:
        r.fail(f"{path}region", "missing value")
        return Region()
    spec = data["region"]
    if spec == "all":
        return Region(everything=True)
    items = spec if isinstance(spec, list) else [spec]
    boxes = []
    for k, item in enumerate(items):
        sub = f"{path}region." if not isinstance(spec, list) else f"{path}region[{k}]."
        if not isinstance(item, dict):
            r.fail(sub.rstrip("."), "must be \"all\", a box table or a list of boxes")
            continue
        b = _box(r, item, sub, d)
        if b is not None:
            boxes.append(b)
    return Region(boxes=tuple(boxes))


def _components(r: _Reader, data: dict, path: str, d: int) -> tuple:
    names = {"x": 0, "y": 1, "z": 2}
    comps = data.get("components", list(range(d)))
    out = []
    if not isinstance(comps, list):
        comps = [comps]
    for c in comps:
        k = names.get(c, c) if isinstance(c, str) else c
        if isinstance(k, bool) or not isinstance(k, int) or not 0 <= k < d:
            r.fail(f"{path}components", f"invalid component {c!r} for a {d}D model")
            continue
        out.append(k)
    return tuple(sorted(set(out)))


def _time(r: _Reader, data: dict, path: str) -> TimeSpec:
    t = data.get("time", {"kind": "constant"})
    if isinstance(t, str):
        t = {"kind": t}
    if not isinstance(t, dict):
        r.fail(f"{path}time", "must be a table or a string")
        return TimeSpec()
    kind = r.string(t, "kind", f"{path}time.", "constant", {"constant", "sine", "ramp"})
    kind = (kind or "constant").lower()
    omega = r.number(t, "omega", f"{path}time.", default=None if kind == "sine" else 0.0)
    ramp = r.number(t, "ramp_time", f"{path}time.", default=None if kind == "ramp" else 0.0,
                    nonneg=True)
    return TimeSpec(kind, omega, ramp)


def _direction(r: _Reader, data: dict, path: str, d: int):
    v = r.vector(data, "direction", path, d)
    if v is not None and all(c == 0 for c in v):
        r.fail(f"{path}direction", "must be non-zero")
        return None
    return v


def parse_config(data: dict, source: str | None = None) -> ScenarioConfig:
    """Validate a config mapping; raises :class:`ConfigError` listing every problem."""
    r = _Reader()
    if not isinstance(data, dict):
        raise ConfigError(["<root>: must be a table"])
    name = r.string(data, "name", "", default="scenario")

    geo = r.table(data, "geometry", "")
    mode = DimensionMode.THREE_D
    try:
        mode = DimensionMode.parse(geo.get("mode", ""))
    except ValueError as exc:
        r.fail("geometry.mode", str(exc))
    d = mode.dim
    lower = r.vector(geo, "lower", "geometry.", d)
    upper = r.vector(geo, "upper", "geometry.", d)
    if lower and upper and any(h <= l for l, h in zip(lower, upper)):
        r.fail("geometry.upper", "box edges must have positive length")
    thickness = r.number(geo, "thickness", "geometry.", default=1.0, positive=True)
    if d == 3 and "thickness" in geo:
        r.fail("geometry.thickness", "only meaningful for 2D modes")
    add = tuple(b for k, t in enumerate(r.tables(geo, "add", "geometry."))
                if (b := _box(r, t, f"geometry.add[{k}].", d)) is not None)
    remove = tuple(b for k, t in enumerate(r.tables(geo, "remove", "geometry."))
                   if (b := _box(r, t, f"geometry.remove[{k}].", d)) is not None)

    disc = r.table(data, "discretization", "")
    dx = r.number(disc, "dx", "discretization.", positive=True)
    if "horizon" in disc and "m_ratio" in disc:
        r.fail("discretization", "give either horizon or m_ratio, not both")
    if "horizon" in disc:
        delta = r.number(disc, "horizon", "discretization.", positive=True)
        m_ratio = delta / dx if dx > 0 else math.nan
    else:
        m_ratio = r.number(disc, "m_ratio", "discretization.", default=3.0, positive=True)
        delta = m_ratio * dx

    mat = r.table(data, "material", "")
    material = None
    values = {k: r.number(mat, k, "material.", default=0.0 if k == "fracture_energy" else None)
              for k in ("young_modulus", "poisson_ratio", "density", "fracture_energy")}
    if all(isinstance(v, float) and math.isfinite(v) for v in values.values()):
        try:
            material = MaterialParams(values["young_modulus"], values["poisson_ratio"],
                                      values["density"], values["fracture_energy"])
        except ValueError as exc:
            r.fail("material", str(exc))

    bnd = r.table(data, "boundary", "", required=False)
    fixed = tuple(
        DofSpec(t.get("name", f"fixed[{k}]"), _region(r, t, f"boundary.fixed[{k}].", d),
                _components(r, t, f"boundary.fixed[{k}].", d))
        for k, t in enumerate(r.tables(bnd, "fixed", "boundary.")))
    tractions = []
    for k, t in enumerate(r.tables(bnd, "traction", "boundary.")):
        p = f"boundary.traction[{k}]."
        tractions.append(TractionSpec(
            t.get("name", f"traction[{k}]"), _region(r, t, p, d), _direction(r, t, p, d),
            r.number(t, "stress", p), r.number(t, "area", p, positive=True), _time(r, t, p)))
    bodies = []
    for k, t in enumerate(r.tables(bnd, "body_force", "boundary.")):
        p = f"boundary.body_force[{k}]."
        bodies.append(BodyForceSpec(
            t.get("name", f"body_force[{k}]"), _region(r, t, p, d), _direction(r, t, p, d),
            r.number(t, "density", p), _time(r, t, p)))
    velocities = tuple(
        DofSpec(t.get("name", f"velocity[{k}]"), _region(r, t, f"boundary.velocity[{k}].", d),
                _components(r, t, f"boundary.velocity[{k}].", d),
                r.number(t, "value", f"boundary.velocity[{k}]."))
        for k, t in enumerate(r.tables(bnd, "velocity", "boundary.")))
    prescribed = tuple(
        DofSpec(t.get("name", f"prescribed[{k}]"), _region(r, t, f"boundary.prescribed[{k}].", d),
                _components(r, t, f"boundary.prescribed[{k}].", d),
                r.number(t, "increment", f"boundary.prescribed[{k}]."))
        for k, t in enumerate(r.tables(bnd, "prescribed", "boundary.")))

    cracks = []
    for k, t in enumerate(r.tables(data, "precrack", "")):
        p = f"precrack[{k}]."
        pts = t.get("points")
        if (not isinstance(pts, list) or not pts
                or not all(isinstance(q, list) and len(q) == d for q in pts)):
            r.fail(f"{p}points", f"expected a list of {d}-component points")
            continue
        if d == 2 and len(pts) != 2:
            r.fail(f"{p}points", "a 2D pre-crack needs exactly two end points")
            continue
        if d == 3 and len(pts) < 3:
            r.fail(f"{p}points", "a 3D pre-crack needs at least three polygon vertices")
            continue
        if lower and upper:
            lo = [min([lower[a]] + [b.lower[a] for b in add]) for a in range(d)]
            hi = [max([upper[a]] + [b.upper[a] for b in add]) for a in range(d)]
            slack = 1e-9 * max(h - l for l, h in zip(lo, hi))
            for q in pts:
                if any(c < l - slack or c > h + slack for c, l, h in zip(q, lo, hi)):
                    r.fail(f"{p}points", f"point {q} lies outside the body's bounding box")
                    break
        cracks.append(PreCrackSpec(tuple(tuple(float(c) for c in q) for q in pts),
                                   r.number(t, "width", p, default=0.0, nonneg=True)))

    no_fail = None
    if "no_fail" in data:
        nf = data["no_fail"]
        no_fail = _region(r, nf if isinstance(nf, dict) else {"region": nf}, "no_fail.", d)

    integ = r.table(data, "integrator", "")
    kind = (r.string(integ, "type", "integrator.", "explicit", {"explicit", "adr"}) or "explicit").lower()
    if kind == "explicit":
        dt = r.number(integ, "dt", "integrator.", positive=True)
        if "steps" in integ and "duration" in integ:
            r.fail("integrator", "give either steps or duration, not both")
        if "duration" in integ:
            duration = r.number(integ, "duration", "integrator.", positive=True)
            steps = int(round(duration / dt)) if dt > 0 else 0
            if dt > 0 and abs(steps * dt - duration) > 1e-9 * duration:
                r.fail("integrator.duration", f"not a whole number of steps of dt={dt}")
        else:
            steps = r.number(integ, "steps", "integrator.", positive=True, integer=True)
        if material is not None and dt > 0 and delta > 0:
            bound = stable_time_step(material, delta)
            if not dt < bound:
                r.fail("integrator.dt", f"{dt} s violates the stability bound delta/c' = {bound:.6g} s")
        integrator = IntegratorSpec("explicit", dt=dt, steps=steps)
    else:
        integrator = IntegratorSpec(
            "adr",
            iterations=r.number(integ, "iterations", "integrator.", positive=True, integer=True),
            tol=r.number(integ, "tol", "integrator.", default=0.0, nonneg=True),
            check_every=r.number(integ, "check_every", "integrator.", default=1, positive=True, integer=True),
            density_factor=r.number(integ, "density_factor", "integrator.", default=1.1, positive=True),
            failure_every=r.number(integ, "failure_every", "integrator.", default=1, positive=True, integer=True),
        )
        if integrator.density_factor < 1:
            r.fail("integrator.density_factor", "must be >= 1")

    sol = r.table(data, "solver", "", required=False)
    kernel = KernelMode.MATRIX
    try:
        kernel = KernelMode.parse(sol.get("kernel", "matrix"))
    except ValueError as exc:
        r.fail("solver.kernel", str(exc))
    fracture = r.boolean(sol, "fracture", "solver.", False)
    stretch = (r.string(sol, "stretch", "solver.", "linearized", {"linearized", "geometric"})
               or "linearized").lower()
    if fracture and material is not None and material.fracture_energy <= 0:
        r.fail("material.fracture_energy", "must be positive when solver.fracture is enabled")

    out = r.table(data, "output", "", required=False)
    probes = []
    for k, q in enumerate(out.get("probes", [])):
        if not isinstance(q, list) or len(q) != d:
            r.fail(f"output.probes[{k}]", f"expected a {d}-component point")
            continue
        probes.append(tuple(float(c) for c in q))
    formats = out.get("formats", ["vtk", "csv"])
    if not isinstance(formats, list) or not set(formats) <= {"vtk", "csv"}:
        r.fail("output.formats", "must be a list drawn from [\"vtk\", \"csv\"]")
        formats = ["vtk", "csv"]
    output = OutputSpec(
        directory=r.string(out, "directory", "output.", default="output"),
        probes=tuple(probes),
        probe_every=r.number(out, "probe_every", "output.", default=1, positive=True, integer=True),
        snapshot_every=r.number(out, "snapshot_every", "output.", default=500, nonneg=True, integer=True),
        formats=tuple(formats),
    )

    known = {"name", "geometry", "discretization", "material", "boundary", "precrack",
             "no_fail", "integrator", "solver", "output", "description"}
    for key in data:
        if key not in known:
            r.fail(key, "unknown section")

    if r.problems:
        raise ConfigError(r.problems)
    return ScenarioConfig(
        name=name, mode=mode, lower=lower, upper=upper, thickness=thickness if d == 2 else 1.0,
        add=add, remove=remove, dx=dx, delta=delta, m_ratio=m_ratio, material=material,
        fixed=fixed, tractions=tuple(tractions), body_forces=tuple(bodies),
        velocities=velocities, prescribed=prescribed, precracks=tuple(cracks),
        no_fail=no_fail, integrator=integrator, kernel=kernel, fracture=fracture,
        geometric_stretch=stretch == "geometric", output=output, source=source,
    )


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    """Read a TOML scenario file. ``overrides`` maps dotted keys to values."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"{path}: file not found"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    for key, value in (overrides or {}).items():
        set_path(data, key, value)
    return parse_config(data, source=str(path))


def set_path(data: dict, dotted: str, value: Any) -> None:
    node = data
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def bundled_scenarios() -> dict:
    """Name -> path of the scenario files shipped with the package."""
    from importlib import resources

    root = resources.files("osbpd") / "scenarios"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml")}


def resolve_config_path(name_or_path) -> Path:
    """Accept a file path or the stem of a bundled scenario."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    bundled = bundled_scenarios()
    if str(name_or_path) in bundled:
        return bundled[str(name_or_path)]
    return p
