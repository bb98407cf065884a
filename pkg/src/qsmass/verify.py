"""End-to-end oracle checks run by ``qsmass verify``.

Every check returns :class:`Check` rows.  Values are deterministic for a
fixed seed; wall-clock timings are reported separately and never written to
files.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .flow import AdmissibleCone, TAU_ROUND, cone_margins, f_speed, run_flow
from .foliation import foliate_distance, foliate_from_flow, gauss_residual
from .grid import area, build_grid
from .mass import mass_function, monotonicity_report
from .oracles import schwarzschild_lapse, sphere_flow_radius
from .quasispherical import initial_lapse, solve
from .surface import ellipsoid, radial_perturbation, sphere


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    relation: str
    passed: bool

    def row(self):
        return (self.name, self.value, self.relation, self.threshold, "pass" if self.passed else "FAIL")


def _check(name, value, relation, threshold):
    value = float(value)
    ok = {"<": value < threshold, "<=": value <= threshold, ">": value > threshold,
          ">=": value >= threshold}[relation]
    return Check(name, value, float(threshold), relation, bool(ok and math.isfinite(value)))


def _certificate(name, sol):
    low = sol.lower_barrier
    gap = min(float(np.min(sol.min_u - low)), float(np.min(sol.bounds.C - sol.max_u)))
    return _check(f"{name}: barrier gap", gap, ">", 0.0)


def schwarzschild_run(ntheta=256, m=0.1, r0=2.0, r1=20.0, dt=0.02, n=3):
    grid = build_grid("axisymmetric", ntheta, n=n)
    rec = foliate_distance(sphere(grid, r0), r1 - r0, dt)
    u0 = np.full(grid.size, schwarzschild_lapse(m, r0, n))
    sol = solve(rec, u0)
    return rec, sol, mass_function(rec, sol)


def perturbed_run(ntheta, dt, eps=0.1, r0=2.0, t_max=2.0):
    grid = build_grid("full2d", ntheta)
    rec = foliate_distance(sphere(grid, r0), t_max, dt)
    u0 = initial_lapse(rec, rec.H_eta[0] / (1.0 + eps * grid.cos_theta))
    sol = solve(rec, u0, tol=1e-8)
    return rec, sol, mass_function(rec, sol)


def check_schwarzschild():
    rec, sol, series = schwarzschild_run()
    r = 2.0 + rec.times
    exact = schwarzschild_lapse(0.1, r)[:, None]
    rep = monotonicity_report(series)
    return [
        _check("schwarzschild: max relative lapse error", np.max(np.abs(sol.u / exact - 1)), "<=", 1e-4),
        _check("schwarzschild: |adm_estimate - 0.1|", abs(series.adm_estimate - 0.1), "<=", 0.002),
        _check("schwarzschild: mdot vs dissipation (relative)", rep.max_rel_mismatch, "<=", 0.05),
        _check("schwarzschild: largest increase of m", rep.max_jump, "<=", rep.tau_mono),
        _certificate("schwarzschild", sol),
    ]


def check_perturbed():
    out = []
    mism = []
    for nt, dt in ((64, 0.05), (128, 0.025)):
        _, sol, series = perturbed_run(nt, dt)
        rep = monotonicity_report(series)
        mism.append(rep.max_rel_mismatch)
        out += [
            _check(f"perturbed {nt}x{2 * nt}: mdot vs dissipation (relative)", rep.max_rel_mismatch, "<=", 0.05),
            _check(f"perturbed {nt}x{2 * nt}: largest increase of m", rep.max_jump, "<=", rep.tau_mono),
            _certificate(f"perturbed {nt}x{2 * nt}", sol),
        ]
    out.append(_check("perturbed: mismatch reduction on doubling", mism[0] / mism[1], ">=", 3.0))
    return out


def check_equality():
    out = []
    grid = build_grid("axisymmetric", 64)
    rec = foliate_distance(ellipsoid(grid, (1, 1, 1.5)), 4.0, 0.05)
    full = build_grid("full2d", 32)
    rec3 = foliate_distance(ellipsoid(full, (1, 1.2, 1.5)), 2.0, 0.05)
    # flow bands carry time-interpolation error O(dt^2) in the coefficients,
    # so they need closely spaced leaves to reach the 1e-6 level
    traj = run_flow(sphere(grid, 1.0), t_max=1.0, record_dt=0.001)
    flow_rec = foliate_from_flow(traj)
    bands = (("ellipsoid distance band", rec), ("triaxial full2d distance band", rec3),
             ("sphere flow band", flow_rec))
    for name, r in bands:
        sol = solve(r, initial_lapse(r, r.H_eta[0]))
        series = mass_function(r, sol)
        a0 = area(r.metric(0))
        out += [
            _check(f"equality, {name}: max |m| / area", np.max(np.abs(series.m)) / a0, "<", 1e-6),
            _check(f"equality, {name}: max |u/eta - 1|", np.max(np.abs(sol.u / r.eta - 1)), "<", 1e-6),
            _certificate(f"equality, {name}", sol),
        ]
    return out


def check_sphere_flow():
    grid = build_grid("axisymmetric", 64)
    traj = run_flow(sphere(grid, 1.0), t_max=1.0)
    leaf = traj.final
    return [
        _check("sphere flow: |radius - e|", abs(leaf.radius_mean - sphere_flow_radius(1.0, 1.0)), "<=", 1e-3),
        _check("sphere flow: roundness", leaf.roundness, "<", 1e-10),
    ]


def check_convexification():
    g3 = build_grid("axisymmetric", 64)
    traj = run_flow(ellipsoid(g3, (1, 1, 1.5)), t_max=6.0, record_dt=0.5)
    g4 = build_grid("axisymmetric", 64, n=4)
    peanut = radial_perturbation(g4, 1.0, 0.24, mode=2)
    traj4 = run_flow(peanut, t_max=5.0, until_convex=True)
    return [
        _check("ellipsoid n=3: reached convexity (1 = yes)", float(traj.reached_convexity), ">=", 1),
        _check("ellipsoid n=3: final roundness", traj.final.roundness, "<", TAU_ROUND),
        _check("n=4 mixed-sign surface: initial min kappa", traj4.leaves[0].geometry.min_kappa, "<", 0),
        _check("n=4 mixed-sign surface: reached convexity (1 = yes)", float(traj4.reached_convexity), ">=", 1),
        _check("n=4 mixed-sign surface: t_convex", traj4.t_convex if traj4.t_convex is not None else math.inf,
               "<", 5.0),
    ]


def _fd_gradient(lam, h):
    m = lam.shape[1]
    out = np.empty_like(lam)
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        out[:, i] = (f_speed(lam + e) - f_speed(lam - e)) / (2 * h)
    return out


def _fd_hessian(lam, h):
    """Fourth-order central differences."""
    m = lam.shape[1]
    H = np.empty(lam.shape + (m,))
    w = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
    for i in range(m):
        for j in range(i, m):
            ei = np.zeros(m)
            ej = np.zeros(m)
            ei[i] = h
            ej[j] = h
            acc = 0.0
            if i == j:
                c = {-2: -1.0, -1: 16.0, 0: -30.0, 1: 16.0, 2: -1.0}
                for a, ca in c.items():
                    acc = acc + ca * f_speed(lam + a * ei)
                H[:, i, i] = acc / (12 * h * h)
                continue
            for a, ca in w.items():
                for b, cb in w.items():
                    acc = acc + ca * cb * f_speed(lam + a * ei + b * ej)
            H[:, i, j] = H[:, j, i] = acc / (144 * h * h)
    return H


def speed_properties(seed=0, count=10_000, dims=(2, 3, 4)):
    rng = np.random.default_rng(seed)
    out = []
    for m in dims:
        cone = AdmissibleCone(m + 1)
        lam = cone.sample(rng, count)
        c = rng.uniform(0.1, 10.0, size=count)
        f = f_speed(lam)
        homog = np.max(np.abs(f_speed(c[:, None] * lam) - c * f) / (c * f))
        grad = _fd_gradient(lam, 1e-6)
        hess = _fd_hessian(lam, 1e-3)
        top = np.max(np.linalg.eigvalsh(hess)[:, -1])
        # rays towards an outside point: bisect to the boundary, then approach it
        far = rng.standard_normal((count, m))
        far = far[cone_margins(far)[1] < 0][: count // 10]
        inner = lam[: far.shape[0]]
        lo, hi = np.zeros(len(far)), np.ones(len(far))
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            pts = inner + mid[:, None] * (far - inner)
            inside = cone.contains(pts)
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        edge = inner + lo[:, None] * (far - inner)
        near = [np.max(f_speed(edge + e * (inner - edge))) for e in (1e-2, 1e-4, 1e-6)]
        out += [
            _check(f"speed m={m}: homogeneity (relative)", homog, "<=", 1e-12),
            _check(f"speed m={m}: min finite-difference partial", grad.min(), ">", 0.0),
            _check(f"speed m={m}: max Hessian eigenvalue", top, "<=", 1e-8),
            _check(f"speed m={m}: max f at 1e-6 from the boundary", near[-1], "<", 1e-5),
            _check(f"speed m={m}: boundary decay ratio (1e-2 vs 1e-6)", near[0] / max(near[-1], 1e-300),
                   ">", 1e3),
        ]
    return out


def gauss_refinement(ntheta=(64, 128, 256)):
    errs = []
    for nt in ntheta:
        grid = build_grid("axisymmetric", nt)
        rec = foliate_distance(ellipsoid(grid, (1, 1, 1.5)), 4.0, 0.5)
        errs.append(float(gauss_residual(rec).max()))
    return errs


def check_gauss():
    errs = gauss_refinement()
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    return [_check(f"gauss residual order {i + 1}", p, ">=", 1.8) for i, p in enumerate(orders)]


SUITE = (
    ("schwarzschild", check_schwarzschild),
    ("perturbed", check_perturbed),
    ("equality", check_equality),
    ("sphere_flow", check_sphere_flow),
    ("convexification", check_convexification),
    ("speed", None),
    ("gauss", check_gauss),
)


def run_suite(seed=0, report=print):
    results = []
    for name, fn in SUITE:
        start = time.perf_counter()
        rows = speed_properties(seed) if fn is None else fn()
        report(f"[{name}] {time.perf_counter() - start:.1f}s")
        for r in rows:
            report(f"  {'pass' if r.passed else 'FAIL'}  {r.name}: {r.value:.6g} {r.relation} {r.threshold:.6g}")
        results += rows
    return results


__all__ = ["Check", "run_suite", "speed_properties", "gauss_refinement", "schwarzschild_run", "perturbed_run"]
