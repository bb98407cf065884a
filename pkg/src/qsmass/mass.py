"""Mass diagnostics along a solved band.

``m(t) = int H1 (1/eta - 1/u) dsigma_t`` is the difference between the
Euclidean mean-curvature integral of a leaf and its mean-curvature integral in
the scalar-flat metric.  Its rate of change should equal

    d(t) = -int K (eta - u)^2 / u dsigma_t  <= 0
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .flow import write_csv
from .foliation import FoliationRecord, time_derivative
from .grid import MetricField
from .quasispherical import LapseSolution


def tau_mono(m0: float) -> float:
    return 1e-6 * abs(m0) + 1e-10


def _normalize(raw: float, n: int):
    return raw / (8 * math.pi) if n == 3 else None


@dataclass(frozen=True)
class MassSeries:
    times: np.ndarray
    area_radius: np.ndarray
    m: np.ndarray
    dissipation: np.ndarray
    mdot: np.ndarray
    brown_york_raw: float
    n: int
    dissipation_after: dict = None
    adm_estimate: float | None = None

    @property
    def brown_york_normalized(self):
        return _normalize(self.brown_york_raw, self.n)

    def rows(self):
        for k in range(self.times.size):
            yield (self.times[k], self.area_radius[k], self.m[k], self.dissipation[k], self.mdot[k])

    def write_csv(self, path) -> None:
        write_csv(path, ("t", "area_radius", "m", "dissipation", "m_discrete_derivative"), self.rows())


def _dissipation(w, K, eta, u):
    return -float(np.dot(w, K * (eta - u) ** 2 / u))


def mass_function(record: FoliationRecord, solution: LapseSolution) -> MassSeries:
    if solution.u.shape != (len(record), record.grid.size):
        raise ValueError("solution and record have different shapes")
    u = solution.u
    m = np.empty(len(record))
    d = np.empty(len(record))
    for k in range(len(record)):
        w = record.metric(k).volume_weights()
        m[k] = float(np.dot(w, record.H1[k] * (1.0 / record.eta[k] - 1.0 / u[k])))
        d[k] = _dissipation(w, record.K[k], record.eta[k], u[k])
    after = {}
    for k, data in record.junctions.items():
        w = record.metric(k).volume_weights()
        ub = u[k] * data.eta / record.eta[k]
        after[k] = _dissipation(w, data.K, data.eta, ub)
    series = MassSeries(
        times=record.times.copy(),
        area_radius=record.area_radii(),
        m=m,
        dissipation=d,
        mdot=time_derivative(record.times, m),
        brown_york_raw=float(m[0]),
        n=record.grid.n,
        dissipation_after=after,
    )
    try:
        est = adm_estimate(series)
    except (ValueError, DomainError):
        est = None
    return MassSeries(**{**series.__dict__, "adm_estimate": est})


@dataclass(frozen=True)
class MonotonicityReport:
    interval_rate: np.ndarray
    midpoint_dissipation: np.ndarray
    max_abs_mismatch: float
    max_rel_mismatch: float
    max_jump: float
    tau_mono: float
    passed: bool

    @property
    def mismatch(self):
        return np.abs(self.interval_rate - self.midpoint_dissipation)


def monotonicity_report(series: MassSeries, rel_tol: float = 0.05, floor: float = 1e-6) -> MonotonicityReport:
    """Compare the per-interval slope of ``m`` with the dissipation at the midpoint.

    The relative mismatch is only measured where ``|d| > floor``.
    """
    t, m, d = series.times, series.m, series.dissipation
    if t.size < 3:
        raise ValueError("need at least three leaves")
    rate = np.diff(m) / np.diff(t)
    left = d[:-1].copy()
    for k, v in (series.dissipation_after or {}).items():
        left[k] = v
    mid = 0.5 * (left + d[1:])
    mis = np.abs(rate - mid)
    big = np.abs(mid) > floor
    rel = float(np.max(mis[big] / np.abs(mid[big]))) if big.any() else 0.0
    jump = float(np.max(np.diff(m)))
    tol = tau_mono(m[0])
    return MonotonicityReport(rate, mid, float(mis.max()), rel, jump, tol,
                              bool(jump <= tol and rel <= rel_tol))


def brown_york(H_hat, H, metric: MetricField, n: int | None = None):
    """``int (H_hat - H) dsigma`` and its ``1/(8 pi)`` normalisation (n = 3 only)."""
    H_hat = np.asarray(H_hat, dtype=float)
    H = np.asarray(H, dtype=float)
    size = metric.grid.size
    if H_hat.shape != (size,) or H.shape != (size,):
        raise ValueError("fields do not match the metric grid")
    n = metric.grid.n if n is None else n
    raw = float(np.dot(metric.volume_weights(), H_hat - H))
    return raw, _normalize(raw, n)


def adm_estimate(series: MassSeries, fraction: float = 1 / 3) -> float:
    """Fit ``m = m_inf + a / r`` over the outer part of the band.

    Returns ``m_inf / (8 pi)`` when n = 3, ``m_inf`` otherwise.
    """
    r = series.area_radius
    if r[-1] < 10 * r[0]:
        raise ValueError(f"band too short for extrapolation (outer/inner radius {r[-1] / r[0]:.3g} < 10)")
    t = series.times
    tail = t >= t[-1] - fraction * (t[-1] - t[0])
    if tail.sum() < 3:
        raise ValueError("too few leaves in the fitting window")
    mt = series.m[tail]
    jump = float(np.max(np.diff(mt)))
    if jump > tau_mono(series.m[0]):
        raise DomainError(f"mass increases by {jump:.3g} in the fitting window")
    A = np.column_stack([np.ones(mt.size), 1.0 / r[tail]])
    coef, *_ = np.linalg.lstsq(A, mt, rcond=None)
    m_inf = float(coef[0])
    return m_inf / (8 * math.pi) if series.n == 3 else m_inf


def summary(series: MassSeries, report: MonotonicityReport, **extra) -> dict:
    out = {
        "brown_york_raw": series.brown_york_raw,
        "brown_york_normalized": series.brown_york_normalized,
        "adm_estimate": series.adm_estimate,
        "monotonicity_pass": report.passed,
        "max_mass_jump": report.max_jump,
        "max_rel_mismatch": report.max_rel_mismatch,
        "m_final": float(series.m[-1]),
    }
    out.update(extra)
    return out


def write_summary(data: dict, path) -> None:
    text = json.dumps(data, sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


__all__ = [
    "tau_mono",
    "MassSeries",
    "mass_function",
    "MonotonicityReport",
    "monotonicity_report",
    "brown_york",
    "adm_estimate",
    "summary",
    "write_summary",
]
