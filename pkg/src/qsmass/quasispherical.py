"""Scalar-flat lapse ``u`` on a foliated band.

Along a :class:`~qsmass.foliation.FoliationRecord` the metric
``u^2 dt^2 + g_t`` has zero scalar curvature exactly when

    u' = (u^2 / H1) Lap u - u^3 K / H1 + u Q / (2 H1),   Q = H1^2 + |h1|^2 + 2 H1'

The solver is an IMEX Euler scheme (diffusion implicit with the ``u^2``
coefficient lagged, reaction explicit) wrapped in step doubling: the two
half-step and one full-step results give both an error estimate and a
second-order Richardson update.  Steps always land on the leaf times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import LinearOperator, cg

from .errors import BoundViolation, LinearSolveError, StepUnderflow
from .flow import write_csv
from .foliation import FoliationRecord, LeafData, require_valid, time_derivative
from .grid import laplacian_operator

TAU_MARGIN = 0.05
CG_RTOL = 1e-10


def _q(data: LeafData) -> np.ndarray:
    return data.H1**2 + data.hsq1 + 2.0 * data.H1p


def _all_leaf_data(record: FoliationRecord):
    for k in range(len(record)):
        yield record.leaf(k)
    yield from record.junctions.values()


def initial_lapse(record: FoliationRecord, H_target) -> np.ndarray:
    """``u0 = eta0 * H_eta / H_target`` so that ``H1 / u0`` equals ``H_target`` on leaf 0."""
    target = np.asarray(H_target, dtype=float)
    target = np.broadcast_to(target, (record.grid.size,))
    if not np.all(np.isfinite(target)) or np.any(target <= 0):
        raise ValueError("target mean curvature must be positive")
    return record.H1[0] / target


@dataclass(frozen=True)
class Bounds:
    C: float
    beta: float
    gamma: float

    def lower(self, t):
        return self.beta * np.exp(-self.gamma * np.asarray(t))

    def __iter__(self):
        return iter((self.C, self.beta, self.gamma))


def apriori_bounds(record: FoliationRecord, u0, tau_margin: float = TAU_MARGIN) -> Bounds:
    """Barrier constants ``u < C`` and ``u > beta exp(-gamma t)`` for the band.

    ``beta`` is fixed from ``u0`` first, then ``gamma`` from ``beta``.  Negative
    values of ``Q`` are clipped to zero in the upper bound.

    At a junction ``u`` is multiplied by the jump of ``eta``, so both barriers
    restart there scaled by the extreme jump ratios.  The returned triple is
    the envelope: ``C`` the largest restarted upper bound, ``beta`` the
    smallest restarted lower constant (the decay rate is unchanged because the
    restarted barriers stay below the first one).
    """
    require_valid(record)
    u0 = np.asarray(u0, dtype=float)
    ratio = 0.0
    lower_rate = -math.inf
    beta0 = (1 - tau_margin) * float(u0.min())
    for d in _all_leaf_data(record):
        q = _q(d)
        ratio = max(ratio, float(np.max(np.maximum(q, 0.0) / (2 * d.K))))
        lower_rate = max(lower_rate, float(np.max(beta0**2 * d.K / d.H1 - q / (2 * d.H1))))
    upper = max(float(u0.max()), math.sqrt(ratio))
    C, beta = upper, beta0
    for k in sorted(record.junctions):
        jump = record.junctions[k].eta / record.eta[k]
        upper = max(float(jump.max()) * upper, math.sqrt(ratio))
        C = max(C, upper)
        beta *= min(1.0, float(jump.min()))
    gamma = (1 + tau_margin) * max(0.0, lower_rate)
    return Bounds((1 + tau_margin) * C, beta, gamma)


@dataclass(frozen=True)
class LapseSolution:
    record: FoliationRecord
    u: np.ndarray
    bounds: Bounds
    residual: np.ndarray
    steps: int
    rejected: int

    @property
    def times(self):
        return self.record.times

    @property
    def min_u(self):
        return self.u.min(axis=1)

    @property
    def max_u(self):
        return self.u.max(axis=1)

    @property
    def lower_barrier(self):
        return self.bounds.lower(self.times - self.times[0])

    def certificate_holds(self) -> bool:
        return bool(np.all(self.lower_barrier < self.min_u) and np.all(self.max_u < self.bounds.C))

    def rows(self):
        for k, t in enumerate(self.times):
            yield (t, self.min_u[k], self.max_u[k], self.residual[k])

    def write_csv(self, path) -> None:
        write_csv(path, ("t", "min_u", "max_u", "residual_norm"), self.rows())


def mean_curvature_u(record: FoliationRecord, solution: LapseSolution, leaf_index: int) -> np.ndarray:
    """Mean curvature ``H1 / u`` of a leaf in the metric ``u^2 dt^2 + g_t``."""
    if not -len(record) <= leaf_index < len(record):
        raise IndexError(f"leaf {leaf_index} outside a band of {len(record)} leaves")
    return record.H1[leaf_index] / solution.u[leaf_index]


class _Interval:
    """Coefficients on ``[t_k, t_{k+1}]``, linear in time."""

    def __init__(self, record, k, ops):
        self.grid = record.grid
        self.t0, self.t1 = record.times[k], record.times[k + 1]
        self.left = record.after(k)
        self.right = record.leaf(k + 1)
        self.ops = (ops(k), ops(k + 1))

    def weight(self, t):
        return min(1.0, max(0.0, (t - self.t0) / (self.t1 - self.t0)))

    def data(self, t):
        s = self.weight(t)
        L, R = self.left, self.right
        mix = lambda a, b: (1 - s) * a + s * b  # noqa: E731
        return (mix(L.H1, R.H1), mix(L.K, R.K), mix(_q(L), _q(R)))

    def operator(self, t):
        s = self.weight(t)
        (S0, m0), (S1, m1) = self.ops
        if s == 0.0:
            return S0, m0
        if s == 1.0:
            return S1, m1
        return (1 - s) * S0 + s * S1, (1 - s) * m0 + s * m1


def _reaction(u, H1, K, Q):
    return -(u**3) * K / H1 + u * Q / (2 * H1)


@lru_cache(maxsize=8)
def _ring_order(grid):
    """Node order that turns each periodic colatitude row into a band of width 2."""
    n = grid.nphi
    ring = np.empty(n, dtype=int)
    ring[0::2] = np.arange((n + 1) // 2)
    ring[1::2] = n - 1 - np.arange(n // 2)
    order = (np.arange(grid.ntheta)[:, None] * n + ring[None, :]).ravel()
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    return order, pos


def _preconditioner(A, grid):
    """Jacobi on axisymmetric grids; exact solves along each colatitude row on full2d.

    The row blocks are principal submatrices of an SPD matrix, so the
    preconditioner stays SPD.  It absorbs the stiff longitude coupling near
    the poles, where the node spacing shrinks like sin(theta).
    """
    if grid.is_axisymmetric:
        return sp.diags(1.0 / A.diagonal())
    order, pos = _ring_order(grid)
    coo = A.tocoo()
    pr, pc = pos[coo.row], pos[coo.col]
    keep = (coo.row // grid.nphi == coo.col // grid.nphi) & (pc >= pr)
    ab = np.zeros((3, A.shape[0]))
    ab[2 - (pc[keep] - pr[keep]), pc[keep]] = coo.data[keep]
    chol = cholesky_banded(ab)

    def apply(r):
        return cho_solve_banded((chol, False), r[order])[pos]

    return LinearOperator(A.shape, matvec=apply, dtype=float)


def _imex_step(u, t, dt, iv: _Interval, rtol):
    H1a, Ka, Qa = iv.data(t)
    rhs = u + dt * _reaction(u, H1a, Ka, Qa)
    H1b, _, _ = iv.data(t + dt)
    S, mass = iv.operator(t + dt)
    d = mass * H1b / (u * u)
    A = sp.csr_matrix(sp.diags(d) - dt * S)
    b = d * rhs
    x, info = cg(A, b, x0=rhs, rtol=rtol, atol=0.0, M=_preconditioner(A, iv.grid), maxiter=20 * u.size)
    if info != 0:
        raise LinearSolveError(f"conjugate gradients did not converge at t={t:.6g} (info={info})")
    return x


def solve(record: FoliationRecord, u0, *, tol: float = 1e-7, dt_max: float | None = None,
          dt_min: float = 1e-12, bounds: Bounds | None = None, check_bounds: bool = True,
          cg_rtol: float = CG_RTOL) -> LapseSolution:
    """Integrate the lapse equation from leaf 0 to the last leaf.

    ``tol`` bounds the step-doubling error estimate relative to ``max |u|``.
    At junctions of concatenated records ``u / eta`` is kept continuous, which
    keeps the mean curvature ``H1 / u`` continuous.  The barrier certificate
    is checked at every leaf unless ``check_bounds`` is false.
    """
    u = np.array(u0, dtype=float).reshape(-1)
    if u.size != record.grid.size:
        raise ValueError("initial lapse does not match the record grid")
    if np.any(u <= 0) or not np.all(np.isfinite(u)):
        raise ValueError("initial lapse must be positive and finite")
    if bounds is None:
        bounds = apriori_bounds(record, u)
    else:
        require_valid(record)
    times = record.times
    cache = {}

    def ops(k):
        if k not in cache:
            if len(cache) > 3:
                cache.pop(min(cache))
            L = laplacian_operator(record.metric(k))
            cache[k] = (L.stiffness, L.mass)
        return cache[k]

    def certify(k, v):
        if not check_bounds:
            return
        low = float(bounds.lower(times[k] - times[0]))
        if not (v.min() > low and v.max() < bounds.C):
            raise BoundViolation(
                f"leaf {k} (t={times[k]:.6g}): u in [{v.min():.6g}, {v.max():.6g}] leaves "
                f"the barrier interval ({low:.6g}, {bounds.C:.6g})")

    out = np.empty((len(record), record.grid.size))
    out[0] = u
    certify(0, u)
    steps = rejected = 0
    dt = None
    for k in range(len(record) - 1):
        if k in record.junctions:
            u = u * record.junctions[k].eta / record.eta[k]
        iv = _Interval(record, k, ops)
        t, t_end = iv.t0, iv.t1
        span = t_end - t
        if dt is None:
            dt = span if dt_max is None else min(span, dt_max)
        while t < t_end:
            h = min(dt, t_end - t, dt_max or math.inf)
            if t_end - t - h < 1e-9 * span:
                h = t_end - t
            if h < dt_min:
                raise StepUnderflow(f"lapse step fell below {dt_min:g} at t={t:.6g}")
            full = _imex_step(u, t, h, iv, cg_rtol)
            half = _imex_step(u, t, 0.5 * h, iv, cg_rtol)
            half = _imex_step(half, t + 0.5 * h, 0.5 * h, iv, cg_rtol)
            err = float(np.max(np.abs(half - full))) / max(1.0, float(np.max(np.abs(u))))
            new = 2.0 * half - full
            if err > tol or np.any(new <= 0) or not np.all(np.isfinite(new)):
                rejected += 1
                dt = 0.5 * h if not np.isfinite(err) or err == 0 else h * max(0.1, 0.9 * math.sqrt(tol / err))
                continue
            steps += 1
            u = new
            t = t_end if h == t_end - t else t + h
            fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * math.sqrt(tol / err)))
            if not (h < dt and fac >= 1):  # a short landing step says nothing about dt
                dt = h * fac
        out[k + 1] = u
        certify(k + 1, u)
    return LapseSolution(record, out, bounds, pde_residual(record, out), steps, rejected)


def pde_residual(record: FoliationRecord, u: np.ndarray) -> np.ndarray:
    """Per-leaf max of ``|u' - (u^2/H1) Lap u - reaction|`` with ``u'`` from the stored leaves."""
    cuts = [0, *sorted(record.junctions), len(record) - 1]
    res = np.zeros(len(record))
    for a, b in zip(cuts, cuts[1:]):
        if b <= a:
            continue
        idx = np.arange(a, b + 1)
        seg = u[idx].copy()
        data = [record.leaf(k) for k in idx]
        if a in record.junctions:
            seg[0] = seg[0] * record.junctions[a].eta / record.eta[a]
            data[0] = record.junctions[a]
        ut = time_derivative(record.times[idx], seg)
        for i, k in enumerate(idx):
            d = data[i]
            lap = laplacian_operator(record.metric(k))(seg[i])
            rhs = seg[i] ** 2 / d.H1 * lap + _reaction(seg[i], d.H1, d.K, _q(d))
            r = float(np.max(np.abs(ut[i] - rhs)))
            res[k] = max(res[k], r)
    return res


__all__ = [
    "TAU_MARGIN",
    "initial_lapse",
    "Bounds",
    "apriori_bounds",
    "LapseSolution",
    "mean_curvature_u",
    "solve",
    "pde_residual",
]
