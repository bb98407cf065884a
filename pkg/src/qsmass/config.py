"""Flat ``key = value`` run configuration with dotted section names.

Example::

    surface.kind = ellipsoid
    surface.axes = 1, 1, 1.5
    grid.mode = axisymmetric
    grid.ntheta = 128
    foliation.t_max = 18
    lapse.initial = schwarzschild
    lapse.mass = 0.1

Blank lines and ``#`` comments are ignored.  Unknown keys are errors so that
typos do not silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SURFACE_KINDS = ("sphere", "ellipsoid", "radial_perturbation", "snapshot")
LAPSE_KINDS = ("match_mean_curvature", "schwarzschild", "explicit")
BAND_SOURCES = ("auto", "distance", "flow", "composite")

DEFAULTS = {
    "surface.kind": "sphere",
    "surface.radius": "1.0",
    "surface.axes": "",
    "surface.amplitude": "0.1",
    "surface.mode": "2",
    "surface.azimuthal": "0",
    "surface.path": "",
    "surface.center": "",
    "grid.mode": "axisymmetric",
    "grid.n": "3",
    "grid.ntheta": "64",
    "grid.nphi": "",
    "flow.stop": "t_max",
    "flow.t_max": "1.0",
    "flow.record_dt": "",
    "flow.dt_max": "",
    "flow.dt_min": "1e-12",
    "flow.c_cfl": "0.2",
    "flow.tau_convex": "1e-6",
    "flow.snapshot_times": "",
    "foliation.source": "auto",
    "foliation.t_max": "9.0",
    "foliation.dt": "0.05",
    "lapse.initial": "match_mean_curvature",
    "lapse.h_target": "euclidean",
    "lapse.mass": "0.0",
    "lapse.path": "",
    "lapse.tol": "1e-7",
    "output.dir": "out",
}


def parse_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _num(raw: dict, key: str, kind=float, positive=False, optional=False):
    text = raw[key]
    if text == "" and optional:
        return None
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind.__name__}") from None
    if positive and not value > 0:
        raise ConfigError(f"{key} must be positive (got {text})")
    return value


def _floats(raw: dict, key: str):
    text = raw[key]
    if not text:
        return ()
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None


def _choice(raw, key, options):
    value = raw[key]
    if value not in options:
        raise ConfigError(f"{key} must be one of {', '.join(options)} (got {value!r})")
    return value


@dataclass(frozen=True)
class RunConfig:
    surface: dict
    grid: dict
    flow: dict
    foliation: dict
    lapse: dict
    output_dir: Path
    raw: dict = field(repr=False, default_factory=dict)
    base: Path = Path(".")

    @classmethod
    def from_text(cls, text: str, base=".", source="<config>") -> "RunConfig":
        raw = dict(DEFAULTS)
        raw.update(parse_text(text, source))
        base = Path(base)

        kind = _choice(raw, "surface.kind", SURFACE_KINDS)
        surface = {
            "kind": kind,
            "radius": _num(raw, "surface.radius", positive=True),
            "axes": _floats(raw, "surface.axes"),
            "amplitude": _num(raw, "surface.amplitude"),
            "mode": _num(raw, "surface.mode", int),
            "azimuthal": _num(raw, "surface.azimuthal", int),
            "center": _floats(raw, "surface.center") or None,
            "path": None,
        }
        if kind == "ellipsoid":
            if not surface["axes"] or min(surface["axes"]) <= 0:
                raise ConfigError("surface.axes must list positive semi-axes")
        if kind == "radial_perturbation" and abs(surface["amplitude"]) >= 1:
            raise ConfigError("surface.amplitude must be below 1 in magnitude so that rho > 0")
        if kind == "snapshot":
            surface["path"] = _existing(base, raw["surface.path"], "surface.path")

        grid = {
            "mode": _choice(raw, "grid.mode", ("axisymmetric", "full2d")),
            "n": _num(raw, "grid.n", int),
            "ntheta": _num(raw, "grid.ntheta", int, positive=True),
            "nphi": _num(raw, "grid.nphi", int, positive=True, optional=True),
        }
        stop = _choice(raw, "flow.stop", ("t_max", "until_convex"))
        flow = {
            "stop": stop,
            "t_max": _num(raw, "flow.t_max", positive=True),
            "record_dt": _num(raw, "flow.record_dt", positive=True, optional=True),
            "dt_max": _num(raw, "flow.dt_max", positive=True, optional=True),
            "dt_min": _num(raw, "flow.dt_min", positive=True),
            "c_cfl": _num(raw, "flow.c_cfl", positive=True),
            "tau_convex": _num(raw, "flow.tau_convex", positive=True),
            "snapshot_times": _floats(raw, "flow.snapshot_times"),
        }
        foliation = {
            "source": _choice(raw, "foliation.source", BAND_SOURCES),
            "t_max": _num(raw, "foliation.t_max", positive=True),
            "dt": _num(raw, "foliation.dt", positive=True),
        }
        initial = _choice(raw, "lapse.initial", LAPSE_KINDS)
        lapse = {
            "initial": initial,
            "h_target": _target(raw["lapse.h_target"]),
            "mass": _num(raw, "lapse.mass"),
            "tol": _num(raw, "lapse.tol", positive=True),
            "path": None,
        }
        if lapse["mass"] < 0:
            raise ConfigError("lapse.mass must be non-negative")
        if initial == "explicit":
            lapse["path"] = _existing(base, raw["lapse.path"], "lapse.path")
        out = Path(raw["output.dir"])
        return cls(surface, grid, flow, foliation, lapse, out if out.is_absolute() else base / out,
                   raw, base)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        return cls.from_text(path.read_text(encoding="utf-8"), path.parent, str(path))


def _existing(base: Path, text: str, key: str) -> Path:
    if not text:
        raise ConfigError(f"{key} is required")
    p = Path(text)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise ConfigError(f"{key}: file {p} does not exist")
    return p


def _target(text: str):
    """``euclidean``, ``scale:c``, ``constant:c`` or ``perturb:eps``."""
    name, _, arg = text.partition(":")
    if name == "euclidean" and not arg:
        return ("euclidean", 1.0)
    if name in ("scale", "constant", "perturb"):
        try:
            value = float(arg)
        except ValueError:
            raise ConfigError(f"lapse.h_target: bad number in {text!r}") from None
        if name != "perturb" and value <= 0:
            raise ConfigError("lapse.h_target must be positive")
        if name == "perturb" and abs(value) >= 1:
            raise ConfigError("lapse.h_target perturbation must be below 1 in magnitude")
        return (name, value)
    raise ConfigError(f"lapse.h_target: unknown form {text!r}")


__all__ = ["RunConfig", "DEFAULTS", "parse_text"]
