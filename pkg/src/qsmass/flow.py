"""Expanding curvature flow ``dF/dt = (1/f) nu`` for star-shaped radial graphs.

The shipped speed is ``f(lam) = ((sum lam)^2 - sum lam^2) / sum lam``, which on
a Euclidean hypersurface equals ``R / H`` (intrinsic scalar curvature over mean
curvature), so the normal velocity is ``H / R``.  Any other speed with the same
call signature (principal curvatures in, ``f`` out) can be passed to
:func:`run_flow`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConeViolation, StarShapeLost, StepUnderflow
from .surface import (
    LeafGeometry,
    RadialSurface,
    forms_from_radial,
    roundness,
    write_snapshot,
)

TAU_CONE = 1e-8
TAU_CONVEX = 1e-6
TAU_ROUND = 1e-3
C_CFL = 0.2

INSIDE = "inside"
BOUNDARY = "boundary"
OUTSIDE = "outside"


def _sums(lam):
    lam = np.asarray(lam, dtype=float)
    s1 = lam.sum(axis=-1)
    s2 = (lam * lam).sum(axis=-1)
    return lam, s1, s2


def f_speed(kappa):
    """``((sum k)^2 - sum k^2) / sum k`` along the last axis.

    Works on a single curvature vector or a stack of them.  Raises
    :class:`ConeViolation` if the trace is not positive anywhere.
    """
    _, s1, s2 = _sums(kappa)
    bad = np.flatnonzero(np.atleast_1d(s1) <= 0)
    if bad.size:
        raise ConeViolation("sum of principal curvatures is not positive", int(bad[0]))
    f = (s1 * s1 - s2) / s1
    return float(f) if np.ndim(f) == 0 else f


def f_gradient(kappa):
    """Partial derivatives ``df/dlam_i = 1 - 2 lam_i / S + Q / S^2``."""
    lam, s1, s2 = _sums(kappa)
    s1 = s1[..., None]
    s2 = s2[..., None]
    return 1.0 - 2.0 * lam / s1 + s2 / (s1 * s1)


def f_hessian(kappa):
    lam, s1, s2 = _sums(kappa)
    m = lam.shape[-1]
    s1 = s1[..., None, None]
    eye = np.eye(m)
    li = lam[..., :, None]
    lj = lam[..., None, :]
    return -2.0 * eye / s1 + 2.0 * (li + lj) / s1**2 - 2.0 * s2[..., None, None] / s1**3


@dataclass(frozen=True)
class ConeStatus:
    status: str
    trace: float
    sigma2: float

    @property
    def margins(self):
        return (self.trace, self.sigma2)


def cone_margins(kappa):
    """The two cone margins ``sum lam`` and ``(sum lam)^2 - sum lam^2``."""
    _, s1, s2 = _sums(kappa)
    return s1, s1 * s1 - s2


def _classify(kappa, tol):
    kappa = np.asarray(kappa, dtype=float)
    trace, sigma2 = cone_margins(kappa)
    scale = np.abs(kappa).max(axis=-1)
    scale = np.where(scale > 0, scale, 1.0)
    out = (trace < -tol * scale) | (sigma2 < -tol * scale**2)
    edge = (np.abs(trace) <= tol * scale) | (np.abs(sigma2) <= tol * scale**2)
    status = np.where(out, OUTSIDE, np.where(edge, BOUNDARY, INSIDE))
    return status, trace, sigma2


def cone_check(kappa, tol: float = TAU_CONE) -> ConeStatus:
    """Classify one curvature vector against the cone.

    Margins within ``tol`` (relative to the curvature scale) count as boundary.
    """
    status, trace, sigma2 = _classify(kappa, tol)
    return ConeStatus(str(status), float(trace), float(sigma2))


class AdmissibleCone:
    """The cone of curvature vectors with positive trace and positive sigma_2."""

    def __init__(self, n: int):
        if n < 3:
            raise ValueError("ambient dimension must be at least 3")
        self.n = n
        self.dim = n - 1

    def __repr__(self):
        return f"AdmissibleCone(n={self.n})"

    def contains(self, lam, tol: float = 0.0) -> np.ndarray:
        trace, sigma2 = cone_margins(lam)
        lam = np.asarray(lam, dtype=float)
        scale = np.abs(lam).max(axis=-1)
        return (trace > tol * scale) & (sigma2 > tol * scale**2)

    def sample(self, rng: np.random.Generator, count: int, margin: float = 1e-3) -> np.ndarray:
        """Unit-norm points inside the cone, away from its boundary by ``margin``.

        Rejection sampling from the uniform distribution on the unit sphere.
        """
        out = []
        have = 0
        while have < count:
            x = rng.standard_normal((2 * count, self.dim))
            x /= np.linalg.norm(x, axis=1)[:, None]
            keep = x[self.contains(x, margin)]
            out.append(keep)
            have += len(keep)
        return np.concatenate(out)[:count]


def leaf_speed(geom: LeafGeometry, speed=f_speed, tol: float = TAU_CONE) -> np.ndarray:
    """Values of ``f`` on a leaf after checking every node is strictly admissible."""
    status, _, _ = _classify(geom.kappa, tol)
    bad = np.flatnonzero(status != INSIDE)
    if bad.size:
        i = int(bad[0])
        raise ConeViolation(
            f"node {i} is {status[i]} the admissible cone (kappa={geom.kappa[i].tolist()})", i)
    return np.asarray(speed(geom.kappa), dtype=float)


def radial_speed(geom: LeafGeometry, speed=f_speed) -> np.ndarray:
    """Rate of change of rho that realises normal velocity ``1/f``."""
    f = leaf_speed(geom, speed)
    cos = geom.radial_cos
    if np.any(cos <= 0):
        i = int(np.argmin(cos))
        raise StarShapeLost(f"normal is tangent to the radial direction at node {i}")
    return 1.0 / (f * cos)


def flow_step(surface: RadialSurface, dt: float, speed=f_speed) -> RadialSurface:
    """One forward-Euler step of the radial form of the flow."""
    geom = forms_from_radial(surface)
    return surface.with_rho(surface.rho + dt * radial_speed(geom, speed))


def stable_dt(surface: RadialSurface, geom: LeafGeometry, f: np.ndarray, c_cfl: float = C_CFL) -> float:
    """Explicit step limit from the diffusion strength of the linearised flow.

    Perturbing the graph by ``delta rho`` changes the normal velocity by about
    ``(sum df/dk_i) / (f^2 rho^2)`` times the angular second derivative.
    """
    grad = f_gradient(geom.kappa).sum(axis=1)
    h = surface.grid.min_spacing * surface.rho
    return float(c_cfl * np.min(h * h * f * f / grad))


@dataclass(frozen=True)
class FlowLeaf:
    t: float
    surface: RadialSurface
    geometry: LeafGeometry
    speed: np.ndarray

    @property
    def min_f(self) -> float:
        return float(self.speed.min())

    @property
    def roundness(self) -> float:
        return roundness(self.surface)

    @property
    def radius_mean(self) -> float:
        w = self.surface.grid.weights
        return float(np.dot(self.surface.rho, w) / w.sum())


@dataclass(frozen=True)
class FlowTrajectory:
    leaves: tuple
    reached_convexity: bool
    t_convex: float | None
    steps: int = 0
    rejected: int = 0
    speed_function: object = field(default=f_speed, repr=False)

    def __post_init__(self):
        ts = [leaf.t for leaf in self.leaves]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.leaves)

    @property
    def times(self) -> np.ndarray:
        return np.array([leaf.t for leaf in self.leaves])

    @property
    def final(self) -> FlowLeaf:
        return self.leaves[-1]

    @property
    def grid(self):
        return self.leaves[0].surface.grid

    def rows(self):
        for leaf in self.leaves:
            g = leaf.geometry
            yield (leaf.t, g.min_kappa, g.max_kappa, leaf.min_f, leaf.roundness, leaf.radius_mean)

    def write_csv(self, path) -> None:
        write_csv(path, ("t", "min_kappa", "max_kappa", "min_f", "roundness", "radius_mean"),
                  self.rows())

    def write_snapshots(self, directory, times) -> list:
        """Write the leaves nearest to each requested time; returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ts = self.times
        paths = []
        for t in times:
            k = int(np.argmin(np.abs(ts - t)))
            p = directory / f"surface_t{ts[k]:.6f}.txt"
            write_snapshot(self.leaves[k].surface, p)
            paths.append(p)
        return paths


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.15g}"
    return "" if x is None else str(x)


def _evaluate(surface, speed):
    geom = forms_from_radial(surface)
    f = leaf_speed(geom, speed)
    if np.any(geom.radial_cos <= 0):
        i = int(np.argmin(geom.radial_cos))
        raise StarShapeLost(f"normal is tangent to the radial direction at node {i}")
    return geom, f, 1.0 / (f * geom.radial_cos)


def run_flow(surface: RadialSurface, t_max: float | None = None, until_convex: bool = False,
             *, dt_max: float | None = None, dt_min: float = 1e-12, c_cfl: float = C_CFL,
             record_dt: float | None = None, save_every: int = 1,
             tau_convex: float = TAU_CONVEX, speed=f_speed) -> FlowTrajectory:
    """Integrate the flow with Heun's method and a diffusion-limited step.

    Stops at ``t_max`` or, with ``until_convex``, at the first leaf whose
    smallest principal curvature exceeds ``tau_convex`` (``t_max`` then acts as
    a safety limit).  Leaves are recorded every ``save_every`` steps, or on the
    uniform time lattice ``record_dt`` when that is given.  Rejected steps
    (cone exit or loss of star-shapedness at a trial state) halve ``dt``.
    """
    if t_max is None and not until_convex:
        raise ValueError("give t_max, until_convex, or both")
    if t_max is not None and t_max < 0:
        raise ValueError("t_max must be non-negative")
    limit = math.inf if t_max is None else float(t_max)

    geom, f, v = _evaluate(surface, speed)
    t = 0.0
    leaves = [FlowLeaf(t, surface, geom, 1.0 / f)]
    t_convex = None
    if geom.min_kappa > tau_convex:
        t_convex = 0.0
    steps = rejected = 0
    next_record = record_dt if record_dt else None
    dt_cap = dt_max if dt_max else math.inf

    def done():
        if until_convex and t_convex is not None:
            return True
        return t >= limit * (1 - 1e-14) if math.isfinite(limit) else False

    while not done():
        dt = min(stable_dt(surface, geom, f, c_cfl), dt_cap, limit - t)
        landing = False
        if next_record is not None and t + dt >= next_record * (1 - 1e-12):
            dt = next_record - t
            landing = True
        while True:
            if dt < dt_min:
                raise StepUnderflow(f"time step fell below {dt_min:g} at t={t:.6g}")
            try:
                trial = surface.with_rho(surface.rho + dt * v)
                _, _, v2 = _evaluate(trial, speed)
                new = surface.with_rho(surface.rho + 0.5 * dt * (v + v2))
                g_new, f_new, v_new = _evaluate(new, speed)
            except (ConeViolation, StarShapeLost, ValueError):
                dt *= 0.5
                landing = False
                rejected += 1
                continue
            break
        t = next_record if landing else t + dt
        if math.isfinite(limit) and abs(t - limit) < 1e-12 * max(1.0, limit):
            t = limit
        surface, geom, f, v = new, g_new, f_new, v_new
        steps += 1
        if t_convex is None and geom.min_kappa > tau_convex:
            t_convex = t
        if landing:
            next_record += record_dt
        record = landing if record_dt else steps % save_every == 0
        if record or done():
            if leaves[-1].t < t:
                leaves.append(FlowLeaf(t, surface, geom, 1.0 / f))
    return FlowTrajectory(tuple(leaves), t_convex is not None, t_convex, steps, rejected, speed)


__all__ = [
    "TAU_CONE",
    "TAU_CONVEX",
    "TAU_ROUND",
    "C_CFL",
    "f_speed",
    "f_gradient",
    "f_hessian",
    "ConeStatus",
    "cone_check",
    "cone_margins",
    "AdmissibleCone",
    "leaf_speed",
    "radial_speed",
    "flow_step",
    "stable_dt",
    "FlowLeaf",
    "FlowTrajectory",
    "run_flow",
    "write_csv",
]
