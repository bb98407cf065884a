"""Discrete foliated bands ``eta^2 dt^2 + g_t`` built from Euclidean leaves.

A :class:`FoliationRecord` stores, per leaf time ``t_k``, the leaf metric, the
lapse ``eta`` and the lapse-weighted extrinsic data ``H1 = eta H``,
``|h1|^2 = eta^2 |h|^2``, ``K = R(g_t) / 2`` and ``dH1/dt``.  Leaves are
parametrised so that points move along the leaf normals; the band metric then
has no shift term.

Records built by :func:`concatenate` may contain junctions where the lapse
jumps.  At a junction leaf the record keeps the data of the following segment
separately (see :meth:`FoliationRecord.after`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import AssumptionViolation, GlueMismatch, NotConvex
from .flow import TAU_CONVEX, FlowTrajectory, leaf_speed, run_flow, write_csv
from .grid import MetricField, SphereGrid
from .surface import (
    LeafGeometry,
    RadialSurface,
    _assemble,
    forms_from_embedding,
    forms_from_radial,
    intrinsic_scalar_curvature,
)

TAU_GLUE = 1e-6


class DegenerateRecord(AssumptionViolation):
    """A band needs at least two leaves to difference H1 in time."""


@dataclass(frozen=True)
class LeafData:
    """Lapse-dependent fields on one leaf."""

    eta: np.ndarray
    H1: np.ndarray
    hsq1: np.ndarray
    K: np.ndarray
    H1p: np.ndarray


@dataclass(frozen=True)
class FoliationRecord:
    grid: SphereGrid
    times: np.ndarray
    metrics: np.ndarray
    eta: np.ndarray
    H1: np.ndarray
    hsq1: np.ndarray
    K: np.ndarray
    H1p: np.ndarray
    euclidean: bool = True
    positions: np.ndarray | None = None
    junctions: dict = field(default_factory=dict)
    origin: str = ""

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise DegenerateRecord("a band needs at least two leaves (dH1/dt is undefined otherwise)")
        if np.any(np.diff(times) <= 0):
            raise ValueError("leaf times must be strictly increasing")
        object.__setattr__(self, "times", times)
        shape = (times.size, self.grid.size)
        for name in ("eta", "H1", "hsq1", "K", "H1p"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.eta <= 0):
            raise ValueError("lapse eta must be positive")
        metrics = np.array(self.metrics, dtype=float)
        if metrics.shape[:2] != shape:
            raise ValueError("metric stack does not match the leaf count")
        metrics.setflags(write=False)
        object.__setattr__(self, "metrics", metrics)

    def __len__(self):
        return self.times.size

    def metric(self, k: int) -> MetricField:
        return MetricField(self.grid, self.metrics[k])

    def leaf(self, k: int) -> LeafData:
        return LeafData(self.eta[k], self.H1[k], self.hsq1[k], self.K[k], self.H1p[k])

    def after(self, k: int) -> LeafData:
        """Leaf data valid on the interval ``(t_k, t_{k+1})`` side of leaf ``k``."""
        return self.junctions.get(k, self.leaf(k))

    @property
    def H_eta(self) -> np.ndarray:
        """Euclidean mean curvature of each leaf, ``H1 / eta``."""
        return self.H1 / self.eta

    def areas(self) -> np.ndarray:
        return np.array([self.metric(k).volume_weights().sum() for k in range(len(self))])

    def area_radii(self) -> np.ndarray:
        return (self.areas() / self.grid.round_volume) ** (1.0 / (self.grid.n - 1))

    def shifted(self, offset: float) -> "FoliationRecord":
        return _replace(self, times=self.times + offset)

    def summary_rows(self):
        for k, t in enumerate(self.times):
            yield (t, self.H1[k].min(), self.H1[k].max(), self.K[k].min(), self.K[k].max(),
                   self.eta[k].min(), self.eta[k].max())

    def write_csv(self, path) -> None:
        write_csv(path, ("t", "min_H1", "max_H1", "min_K", "max_K", "min_eta", "max_eta"),
                  self.summary_rows())

    def write_fields(self, path, names=("eta", "H1", "hsq1", "K", "H1p")) -> None:
        """Text dump: one header line then one value per line, per field per leaf."""
        g = self.grid
        lines = []
        for k, t in enumerate(self.times):
            for name in names:
                lines.append(f"# qsmass-field name={name} leaf={k} t={t!r} mode={g.mode} "
                             f"n={g.n} ntheta={g.ntheta} nphi={g.nphi}")
                lines.extend(f"{v:.17g}" for v in getattr(self, name)[k])
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _replace(rec: FoliationRecord, **changes) -> FoliationRecord:
    kw = {name: getattr(rec, name) for name in rec.__dataclass_fields__}
    kw.update(changes)
    return FoliationRecord(**kw)


def time_derivative(times, values) -> np.ndarray:
    """dX/dt along axis 0: centered inside, one-sided second order at the ends."""
    times = np.asarray(times, dtype=float)
    if times.size < 3:
        return np.gradient(values, times, axis=0, edge_order=1)
    return np.gradient(values, times, axis=0, edge_order=2)


# -- distance surfaces ----------------------------------------------------------


def _offset(grid, g, h, t):
    """Forms of the parallel surface at distance ``t``: g + 2t h + t^2 III, h + t III."""
    if grid.is_axisymmetric:
        third = h * h / g
    else:
        E, F, G = g[:, 0], g[:, 1], g[:, 2]
        det = E * G - F * F
        inv = np.column_stack([G, -F, E]) / det[:, None]
        L, M, N = h[:, 0], h[:, 1], h[:, 2]
        # h g^{-1} h for symmetric 2x2 matrices stored as (xx, xy, yy)
        a = L * inv[:, 0] + M * inv[:, 1]
        b = L * inv[:, 1] + M * inv[:, 2]
        c = M * inv[:, 0] + N * inv[:, 1]
        d = M * inv[:, 1] + N * inv[:, 2]
        third = np.column_stack([a * L + b * M, a * M + b * N, c * M + d * N])
    return g + 2 * t * h + t * t * third, h + t * third


def foliate_distance(source, t_max: float, dt: float, *, tau_convex: float = TAU_CONVEX,
                     positions=None) -> FoliationRecord:
    """Band of parallel surfaces ``X + t nu`` for ``t`` in ``[0, t_max]``.

    ``source`` is a :class:`RadialSurface`, or a :class:`LeafGeometry` together
    with its node ``positions`` (e.g. the last leaf of a flow band).  Leaves are
    evenly spaced with step at most ``dt``.  Offset geometry is exact given the
    base forms, and ``dH/dt = -|h|^2`` holds analytically for unit speed.
    """
    if isinstance(source, RadialSurface):
        geom = forms_from_radial(source)
        X0 = source.positions()
    elif isinstance(source, LeafGeometry):
        if positions is None:
            raise ValueError("positions are required when starting from a LeafGeometry")
        geom, X0 = source, np.asarray(positions, dtype=float)
    else:
        raise TypeError(f"cannot build a distance band from {type(source).__name__}")
    if t_max <= 0 or dt <= 0:
        raise ValueError("t_max and dt must be positive")
    if geom.min_kappa <= tau_convex:
        i = int(np.argmin(geom.kappa[:, 0]))
        raise NotConvex(f"distance surfaces need a strictly convex leaf; min kappa "
                        f"{geom.min_kappa:.3g} at node {i}")
    grid = geom.grid
    steps = max(1, math.ceil(t_max / dt - 1e-9))
    times = np.linspace(0.0, t_max, steps + 1)
    g0, h0 = geom.metric.comps, geom.h
    mets, H, hsq, K, X = [], [], [], [], []
    for t in times:
        g, h = _offset(grid, g0, h0, t)
        Xt = X0 + t * geom.normal
        leaf = _assemble(grid, g, h, geom.normal, None)
        mets.append(g)
        H.append(leaf.H)
        hsq.append(leaf.hsq)
        K.append(0.5 * leaf.twoK)
        X.append(Xt)
    hsq = np.array(hsq)
    return FoliationRecord(
        grid=grid, times=times, metrics=np.array(mets), eta=np.ones((len(times), grid.size)),
        H1=np.array(H), hsq1=hsq, K=np.array(K), H1p=-hsq, euclidean=True,
        positions=np.array(X), origin="distance",
    )


# -- flow bands -----------------------------------------------------------------


class _RadialInterpolant:
    """Cubic interpolation of a radial graph at arbitrary directions."""

    def __init__(self, surface: RadialSurface):
        grid = surface.grid
        self.axisymmetric = grid.is_axisymmetric
        th = grid.theta if self.axisymmetric else grid.theta.reshape(grid.shape)[:, 0]
        # the great circle through both poles is sampled uniformly by +-theta_i
        circle = np.concatenate([-th[::-1], th])
        if self.axisymmetric:
            vals = np.concatenate([surface.rho[::-1], surface.rho])
            xs = np.append(circle, circle[0] + 2 * np.pi)
            self.spline = CubicSpline(xs, np.append(vals, vals[0]), bc_type="periodic")
            return
        V = grid.reshape(surface.rho)
        nphi = grid.nphi
        across = np.roll(V, nphi // 2, axis=1)[::-1]
        W = np.concatenate([across, V], axis=0)
        ph = grid.phi.reshape(grid.shape)[0]
        pad = 4
        W = np.concatenate([W[-pad:], W, W[:pad]], axis=0)
        W = np.concatenate([W[:, -pad:], W, W[:, :pad]], axis=1)
        dth = circle[1] - circle[0]
        dph = ph[1] - ph[0]
        tx = np.concatenate([circle[0] - dth * np.arange(pad, 0, -1), circle,
                             circle[-1] + dth * np.arange(1, pad + 1)])
        py = np.concatenate([ph[0] - dph * np.arange(pad, 0, -1), ph,
                             ph[-1] + dph * np.arange(1, pad + 1)])
        self.spline = RectBivariateSpline(tx, py, W, kx=3, ky=3, s=0)

    def __call__(self, Y):
        if self.axisymmetric:
            theta = np.arctan2(Y[:, 1], Y[:, 0])
            return self.spline(theta)
        r = np.linalg.norm(Y, axis=1)
        theta = np.arccos(np.clip(Y[:, 2] / r, -1.0, 1.0))
        phi = np.mod(np.arctan2(Y[:, 1], Y[:, 0]), 2 * np.pi)
        return self.spline(theta, phi, grid=False)


def _hit(P, d, target: _RadialInterpolant, s0, tol=1e-13, maxiter=60):
    """Solve ``|P + s d| = rho(P + s d)`` for ``s`` node by node (secant method)."""

    def F(s):
        Y = P + s[:, None] * d
        return np.linalg.norm(Y, axis=1) - target(Y)

    s_prev, s = s0, s0 * 1.01 + 1e-12
    f_prev, f = F(s_prev), F(s)
    scale = np.linalg.norm(P, axis=1)
    for _ in range(maxiter):
        denom = f - f_prev
        safe = np.abs(denom) > 0
        step = np.where(safe, f * (s - s_prev) / np.where(safe, denom, 1.0), 0.0)
        s_prev, f_prev = s, f
        s = s - step
        f = F(s)
        if np.all(np.abs(f) <= tol * scale):
            return s
    raise ArithmeticError("normal trajectory failed to meet the next leaf")


def _lapse_leaf(geom: LeafGeometry, speed):
    eta = 1.0 / leaf_speed(geom, speed)
    return eta, eta * geom.H, eta * eta * geom.hsq, 0.5 * geom.twoK


def foliate_from_flow(traj: FlowTrajectory) -> FoliationRecord:
    """Band swept by a flow trajectory, with lapse ``eta = 1/f``.

    Node positions are carried from leaf to leaf along the normal direction
    (a Heun average of the normals at both ends), landing exactly on the next
    recorded leaf.
    """
    if len(traj) < 2:
        raise DegenerateRecord("a flow trajectory with a single leaf gives no band")
    grid = traj.grid
    speed = traj.speed_function
    times = traj.times
    X = traj.leaves[0].surface.positions()
    geom = forms_from_embedding(grid, X)
    cols = [[] for _ in range(6)]
    for k in range(len(traj)):
        eta, H1, hsq1, K = _lapse_leaf(geom, speed)
        for col, v in zip(cols, (geom.metric.comps, eta, H1, hsq1, K, X)):
            col.append(v)
        if k + 1 == len(traj):
            break
        target = _RadialInterpolant(traj.leaves[k + 1].surface)
        s0 = eta * (times[k + 1] - times[k])
        nu = geom.normal
        s = _hit(X, nu, target, s0)
        trial = forms_from_embedding(grid, X + s[:, None] * nu)
        nu_bar = nu + trial.normal
        nu_bar /= np.linalg.norm(nu_bar, axis=1)[:, None]
        s = _hit(X, nu_bar, target, s)
        X = X + s[:, None] * nu_bar
        geom = forms_from_embedding(grid, X)
    mets, eta, H1, hsq1, K, pos = (np.array(c) for c in cols)
    return FoliationRecord(
        grid=grid, times=times, metrics=mets, eta=eta, H1=H1, hsq1=hsq1, K=K,
        H1p=time_derivative(times, H1), euclidean=True, positions=pos, origin="flow",
    )


def final_leaf(record: FoliationRecord) -> LeafGeometry:
    """Euclidean geometry of the last leaf, recomputed from its node positions."""
    if record.positions is None:
        raise ValueError("record carries no node positions")
    return forms_from_embedding(record.grid, record.positions[-1])


# -- gluing ---------------------------------------------------------------------


def concatenate(a: FoliationRecord, b: FoliationRecord, tau_glue: float = TAU_GLUE) -> FoliationRecord:
    """Append ``b`` to ``a`` after shifting ``b`` to start at ``a``'s end time.

    The shared leaf keeps ``a``'s data; ``b``'s lapse data on it is kept as a
    junction so solvers can switch lapse there.
    """
    if a.grid != b.grid:
        raise GlueMismatch("records live on different grids")
    ga, gb = a.metrics[-1], b.metrics[0]
    mismatch = float(np.max(np.abs(ga - gb)) / np.max(np.abs(ga)))
    if mismatch > tau_glue:
        raise GlueMismatch(f"leaf metrics differ by {mismatch:.3g} (relative) at the junction")
    j = len(a) - 1
    offset = a.times[-1] - b.times[0]
    junctions = dict(a.junctions)
    junctions[j] = b.leaf(0)
    for k, data in b.junctions.items():
        junctions[k + j] = data
    pos = None
    if a.positions is not None and b.positions is not None:
        pos = np.concatenate([a.positions, b.positions[1:]])

    def cat(name):
        return np.concatenate([getattr(a, name), getattr(b, name)[1:]])

    return FoliationRecord(
        grid=a.grid, times=np.concatenate([a.times, b.times[1:] + offset]),
        metrics=cat("metrics"), eta=cat("eta"), H1=cat("H1"), hsq1=cat("hsq1"), K=cat("K"),
        H1p=cat("H1p"), euclidean=a.euclidean and b.euclidean, positions=pos,
        junctions=junctions, origin=f"{a.origin}+{b.origin}",
    )


def composite_band(surface: RadialSurface, t_max: float, dt: float, *, flow_t_max: float,
                   tau_convex: float = TAU_CONVEX, attempts: int = 6, **flow_options):
    """Flow ``surface`` until convex, then continue with distance surfaces.

    Returns ``(record, trajectory)``.  The flow's stopping test looks at the
    radial-graph curvatures while the distance band starts from the leaf as
    reached along normal trajectories; the two discretisations differ slightly,
    so the stopping threshold is raised until the hand-off leaf itself is
    strictly convex.
    """
    stop = tau_convex
    for _ in range(attempts):
        traj = run_flow(surface, t_max=flow_t_max, until_convex=True, tau_convex=stop, **flow_options)
        if not traj.reached_convexity:
            raise NotConvex(f"flow did not reach convexity by t={flow_t_max:g}")
        if len(traj) == 1:
            return foliate_distance(surface, t_max, dt, tau_convex=tau_convex), traj
        inner = foliate_from_flow(traj)
        base = final_leaf(inner)
        if base.min_kappa > tau_convex:
            outer = foliate_distance(base, t_max, dt, positions=inner.positions[-1], tau_convex=tau_convex)
            return concatenate(inner, outer), traj
        stop = 2.0 * max(stop, tau_convex - base.min_kappa)
    raise NotConvex(f"hand-off leaf still not convex (min kappa {base.min_kappa:.3g})")


# -- validation -----------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    min_K: np.ndarray
    min_H1: np.ndarray
    gauss_residual: np.ndarray | None
    passed: bool
    failing_leaf: int | None
    message: str = ""

    @property
    def max_gauss_residual(self):
        return None if self.gauss_residual is None else float(self.gauss_residual.max())


def gauss_residual(record: FoliationRecord) -> np.ndarray | None:
    """Per-leaf max of ``|R(g_t) - eta^-2 (H1^2 - |h1|^2)|`` with R from the metric alone.

    Only available on axisymmetric grids.
    """
    if not record.grid.is_axisymmetric:
        return None
    out = np.empty(len(record))
    for k in range(len(record)):
        R = intrinsic_scalar_curvature(record.metric(k))
        ext = (record.H1[k] ** 2 - record.hsq1[k]) / record.eta[k] ** 2
        out[k] = np.max(np.abs(R - ext))
    return out


def validate(record: FoliationRecord) -> ValidationReport:
    """Check positivity of K and H1 on every leaf (and on junction data)."""
    min_K = record.K.min(axis=1)
    min_H1 = record.H1.min(axis=1)
    bad = np.flatnonzero((min_K <= 0) | (min_H1 <= 0))
    for k, data in sorted(record.junctions.items()):
        if (data.K.min() <= 0 or data.H1.min() <= 0) and k not in bad:
            bad = np.sort(np.append(bad, k))
    resid = gauss_residual(record) if record.euclidean else None
    if bad.size:
        k = int(bad[0])
        msg = f"leaf {k} (t={record.times[k]:.6g}): min K={min_K[k]:.3g}, min H1={min_H1[k]:.3g}"
        return ValidationReport(min_K, min_H1, resid, False, k, msg)
    return ValidationReport(min_K, min_H1, resid, True, None, "ok")


def require_valid(record: FoliationRecord) -> ValidationReport:
    rep = validate(record)
    if not rep.passed:
        raise AssumptionViolation(f"standing assumption fails on {rep.message}")
    return rep


__all__ = [
    "TAU_GLUE",
    "DegenerateRecord",
    "LeafData",
    "FoliationRecord",
    "time_derivative",
    "foliate_distance",
    "foliate_from_flow",
    "final_leaf",
    "concatenate",
    "composite_band",
    "ValidationReport",
    "gauss_residual",
    "validate",
    "require_valid",
]
