"""Sphere grids, quadrature and metric-aware finite-volume operators.

Two layouts are supported:

``full2d``
    Colatitude/longitude nodes on S^2 (ambient dimension 3), shape
    ``(ntheta, nphi)`` flattened row-major.
``axisymmetric``
    Colatitude nodes only, for fields invariant under rotations about the
    polar axis of S^{n-1}, ambient dimension ``n >= 3``.

Colatitudes are staggered, ``theta_i = (i + 1/2) * pi / ntheta``, so no node
sits on a pole.  Metric fields are stored relative to the round orthonormal
frame ``(d_theta, d_phi / sin(theta))`` which keeps every stored component
regular at the poles:

* full2d: ``(g_tt, g_tp / sin, g_pp / sin^2)``
* axisymmetric: ``(a, b)`` with ``g = a dtheta^2 + b sin^2(theta) dOmega^2``

The round unit-sphere metric is therefore ``(1, 0, 1)`` or ``(1, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import special

from .errors import GridError

FULL2D = "full2d"
AXISYMMETRIC = "axisymmetric"
_MODES = (FULL2D, AXISYMMETRIC)


def sphere_volume(dim: int) -> float:
    """Volume of the unit round sphere S^dim."""
    return 2.0 * math.pi ** ((dim + 1) / 2.0) / math.gamma((dim + 1) / 2.0)


class SphereGrid:
    """Node layout and round quadrature on S^{n-1}.

    Instances are immutable and compare equal when they describe the same
    discretisation, so they can be used as cache keys.
    """

    __slots__ = ("mode", "n", "ntheta", "nphi", "_arrays")

    def __init__(self, mode: str, ntheta: int, nphi: int = 1, n: int = 3):
        mode = mode.lower()
        if mode not in _MODES:
            raise GridError(f"unknown grid mode {mode!r}")
        if ntheta < 8:
            raise GridError(f"ntheta={ntheta} too small (minimum 8)")
        if n < 3:
            raise GridError(f"ambient dimension n={n} must be >= 3")
        if mode == FULL2D:
            if n != 3:
                raise GridError("full2d grids live on S^2 (n=3)")
            if nphi < 8 or nphi % 2:
                raise GridError(f"nphi={nphi} must be even and >= 8")
        else:
            nphi = 1
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "ntheta", int(ntheta))
        object.__setattr__(self, "nphi", int(nphi))
        object.__setattr__(self, "_arrays", _node_arrays(mode, int(ntheta), int(nphi), int(n)))

    def __setattr__(self, name, value):
        raise AttributeError("SphereGrid is immutable")

    @property
    def key(self) -> tuple:
        return (self.mode, self.n, self.ntheta, self.nphi)

    def __eq__(self, other):
        return isinstance(other, SphereGrid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        if self.mode == FULL2D:
            return f"SphereGrid(full2d, ntheta={self.ntheta}, nphi={self.nphi})"
        return f"SphereGrid(axisymmetric, n={self.n}, ntheta={self.ntheta})"

    @property
    def is_axisymmetric(self) -> bool:
        return self.mode == AXISYMMETRIC

    @property
    def shape(self) -> tuple[int, ...]:
        if self.mode == FULL2D:
            return (self.ntheta, self.nphi)
        return (self.ntheta,)

    @property
    def size(self) -> int:
        return self.ntheta * self.nphi

    @property
    def dtheta(self) -> float:
        return math.pi / self.ntheta

    @property
    def dphi(self) -> float:
        return 2.0 * math.pi / self.nphi

    @property
    def theta(self) -> np.ndarray:
        return self._arrays["theta"]

    @property
    def phi(self) -> np.ndarray:
        return self._arrays["phi"]

    @property
    def sin_theta(self) -> np.ndarray:
        return self._arrays["sin"]

    @property
    def cos_theta(self) -> np.ndarray:
        return self._arrays["cos"]

    @property
    def weights(self) -> np.ndarray:
        """Round cell measures; they sum to |S^{n-1}| up to rounding."""
        return self._arrays["w"]

    @property
    def min_spacing(self) -> np.ndarray:
        """Smallest round-metric node spacing at each node (radians)."""
        return self._arrays["spacing"]

    @property
    def round_volume(self) -> float:
        return sphere_volume(self.n - 1)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View flat node values (optionally with trailing axes) on the grid shape."""
        values = np.asarray(values)
        return values.reshape(self.shape + values.shape[1:])

    def unit_vectors(self) -> np.ndarray:
        """Radial unit vectors omega at the nodes.

        Shape ``(N, 3)`` for full2d; for axisymmetric grids the meridian-plane
        components ``(cos theta, sin theta)``.
        """
        s, c = self.sin_theta, self.cos_theta
        if self.mode == FULL2D:
            return np.stack([s * np.cos(self.phi), s * np.sin(self.phi), c], axis=-1)
        return np.stack([c, s], axis=-1)


def _sin_power_integral(k: int, x: np.ndarray) -> np.ndarray:
    """int_0^x sin^k for x in [0, pi]."""
    total = math.sqrt(math.pi) * math.gamma((k + 1) / 2.0) / math.gamma(k / 2.0 + 1.0)
    lo = np.minimum(x, math.pi - x)
    part = 0.5 * total * special.betainc((k + 1) / 2.0, 0.5, np.sin(lo) ** 2)
    return np.where(x <= math.pi / 2, part, total - part)


def _node_arrays(mode, ntheta, nphi, n):
    # Cell measures are exact integrals of sin^(n-2) over each colatitude
    # band: the midpoint value is inconsistent with the flux form in the
    # pole cells once n >= 4.
    h = math.pi / ntheta
    th1 = (np.arange(ntheta) + 0.5) * h
    edges = _sin_power_integral(n - 2, np.arange(ntheta + 1) * h)
    band = np.diff(edges)
    if mode == FULL2D:
        hp = 2.0 * math.pi / nphi
        ph1 = np.arange(nphi) * hp
        theta = np.repeat(th1, nphi)
        phi = np.tile(ph1, ntheta)
        s = np.sin(theta)
        w = np.repeat(band, nphi) * hp
        spacing = np.minimum(h, s * hp)
    else:
        theta = th1
        phi = np.zeros(ntheta)
        s = np.sin(theta)
        w = sphere_volume(n - 2) * band
        spacing = np.full(ntheta, h)
    arrays = {
        "theta": theta,
        "phi": phi,
        "sin": s,
        "cos": np.cos(theta),
        "w": w,
        "spacing": spacing,
    }
    for arr in arrays.values():
        arr.setflags(write=False)
    return arrays


def build_grid(mode: str, ntheta: int, nphi: int | None = None, n: int = 3) -> SphereGrid:
    """Construct a grid; ``nphi`` defaults to ``2 * ntheta`` for full2d."""
    if nphi is None:
        nphi = 2 * ntheta if mode.lower() == FULL2D else 1
    return SphereGrid(mode, ntheta, nphi, n)


@dataclass(frozen=True)
class ScalarField:
    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != self.grid.size:
            raise GridError(f"field has {vals.size} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("scalar field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(field, grid: SphereGrid) -> np.ndarray:
    if isinstance(field, ScalarField):
        if field.grid != grid:
            raise GridError("field and metric live on different grids")
        return field.values
    vals = np.asarray(field, dtype=float)
    if vals.ndim == 0:
        return np.full(grid.size, float(vals))
    vals = vals.reshape(-1)
    if vals.size != grid.size:
        raise GridError(f"field has {vals.size} values, grid has {grid.size} nodes")
    return vals


class MetricField:
    """Leaf metric in frame-normalised components (see module docstring)."""

    __slots__ = ("grid", "comps")

    def __init__(self, grid: SphereGrid, comps):
        comps = np.array(comps, dtype=float)
        ncomp = 2 if grid.is_axisymmetric else 3
        if comps.shape != (grid.size, ncomp):
            raise GridError(f"metric components must have shape {(grid.size, ncomp)}, got {comps.shape}")
        comps.setflags(write=False)
        self.grid = grid
        self.comps = comps

    @classmethod
    def round(cls, grid: SphereGrid, radius: float = 1.0) -> "MetricField":
        r2 = radius * radius
        if grid.is_axisymmetric:
            comps = np.tile([r2, r2], (grid.size, 1))
        else:
            comps = np.tile([r2, 0.0, r2], (grid.size, 1))
        return cls(grid, comps)

    def min_eigenvalue(self) -> np.ndarray:
        c = self.comps
        if self.grid.is_axisymmetric:
            return np.minimum(c[:, 0], c[:, 1])
        tr = c[:, 0] + c[:, 2]
        det = c[:, 0] * c[:, 2] - c[:, 1] ** 2
        disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
        return tr / 2 - disc

    def is_positive_definite(self) -> bool:
        return bool(np.all(self.min_eigenvalue() > 0) and np.all(np.isfinite(self.comps)))

    def check(self) -> None:
        lam = self.min_eigenvalue()
        bad = np.flatnonzero(~(lam > 0))
        if bad.size:
            raise GridError(f"metric not positive-definite at node {int(bad[0])}")

    def density(self) -> np.ndarray:
        """sqrt(det g) / sqrt(det round) at each node."""
        c = self.comps
        if self.grid.is_axisymmetric:
            return np.sqrt(c[:, 0]) * c[:, 1] ** ((self.grid.n - 2) / 2.0)
        return np.sqrt(c[:, 0] * c[:, 2] - c[:, 1] ** 2)

    def inverse(self) -> np.ndarray:
        c = self.comps
        if self.grid.is_axisymmetric:
            return 1.0 / c
        det = c[:, 0] * c[:, 2] - c[:, 1] ** 2
        return np.stack([c[:, 2] / det, -c[:, 1] / det, c[:, 0] / det], axis=-1)

    def volume_weights(self) -> np.ndarray:
        """Quadrature weights of d sigma_t."""
        return self.density() * self.grid.weights


def integrate(field, metric: MetricField) -> float:
    """Integral of a scalar field against the volume form of ``metric``.

    Summation is a plain ordered dot product, so results do not depend on
    thread count.
    """
    vals = _values(field, metric.grid)
    return float(np.dot(vals, metric.volume_weights()))


def area(metric: MetricField) -> float:
    return float(np.sum(metric.volume_weights()))


# -- finite differences with pole reflection ---------------------------------


def _pad_theta(v: np.ndarray, grid: SphereGrid, parity: int = 1) -> np.ndarray:
    """Add one ghost row beyond each pole.

    Across a pole the node (-theta, phi) is the point (theta, phi + pi).  For
    axisymmetric profiles ``parity`` selects even (+1) or odd (-1) extension.
    """
    if grid.is_axisymmetric:
        lo = parity * v[:1]
        hi = parity * v[-1:]
    else:
        half = grid.nphi // 2
        lo = np.roll(v[:1], half, axis=1)
        hi = np.roll(v[-1:], half, axis=1)
    return np.concatenate([lo, v, hi], axis=0)


def theta_derivatives(v: np.ndarray, grid: SphereGrid, parity: int = 1):
    """Centered first and second colatitude derivatives of gridded values.

    ``v`` has the grid shape (optionally with trailing vector axes).
    """
    p = _pad_theta(v, grid, parity)
    h = grid.dtheta
    d1 = (p[2:] - p[:-2]) / (2 * h)
    d2 = (p[2:] - 2 * p[1:-1] + p[:-2]) / (h * h)
    return d1, d2


def phi_derivatives(v: np.ndarray, grid: SphereGrid):
    h = grid.dphi
    up = np.roll(v, -1, axis=1)
    dn = np.roll(v, 1, axis=1)
    return (up - dn) / (2 * h), (up - 2 * v + dn) / (h * h)


def mixed_derivative(v: np.ndarray, grid: SphereGrid) -> np.ndarray:
    p = _pad_theta(v, grid)
    d = (np.roll(p, -1, axis=1) - np.roll(p, 1, axis=1)) / (2 * grid.dphi)
    return (d[2:] - d[:-2]) / (2 * grid.dtheta)


# -- Laplace-Beltrami ----------------------------------------------------------


@lru_cache(maxsize=32)
def _difference_ops(grid: SphereGrid):
    """Metric-independent sparse stencils, built once per grid."""
    nt, npf = grid.ntheta, grid.nphi
    ht = grid.dtheta
    if grid.is_axisymmetric:
        f = np.arange(nt - 1)
        rows = np.concatenate([f, f])
        cols = np.concatenate([f, f + 1])
        gt = sp.csr_matrix(
            (np.concatenate([-np.ones(nt - 1), np.ones(nt - 1)]) / ht, (rows, cols)),
            shape=(nt - 1, nt),
        )
        avg = sp.csr_matrix((np.full(2 * (nt - 1), 0.5), (rows, cols)), shape=(nt - 1, nt))
        s_face = np.sin((f + 1) * ht)
        return {"gt": gt, "avg_t": avg, "s_face": s_face}

    hp = grid.dphi
    N = grid.size

    def idx(i, j):
        return i * npf + (j % npf)

    i, j = np.meshgrid(np.arange(nt - 1), np.arange(npf), indexing="ij")
    i, j = i.ravel(), j.ravel()
    nf = i.size
    frow = np.arange(nf)
    a, b = idx(i, j), idx(i + 1, j)
    gt = sp.csr_matrix((np.r_[-np.ones(nf), np.ones(nf)] / ht, (np.r_[frow, frow], np.r_[a, b])), shape=(nf, N))
    avg_t = sp.csr_matrix((np.full(2 * nf, 0.5), (np.r_[frow, frow], np.r_[a, b])), shape=(nf, N))
    # corners (i+1/2, j+1/2)
    c00, c01, c10, c11 = idx(i, j), idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1)
    rows4 = np.tile(frow, 4)
    cols4 = np.r_[c00, c01, c10, c11]
    ct = sp.csr_matrix((np.r_[-np.ones(nf), -np.ones(nf), np.ones(nf), np.ones(nf)] / (2 * ht), (rows4, cols4)), shape=(nf, N))
    cp = sp.csr_matrix((np.r_[-np.ones(nf), np.ones(nf), -np.ones(nf), np.ones(nf)] / (2 * hp), (rows4, cols4)), shape=(nf, N))
    avg_c = sp.csr_matrix((np.full(4 * nf, 0.25), (rows4, cols4)), shape=(nf, N))

    i2, j2 = np.meshgrid(np.arange(nt), np.arange(npf), indexing="ij")
    i2, j2 = i2.ravel(), j2.ravel()
    ng = i2.size
    grow = np.arange(ng)
    a2, b2 = idx(i2, j2), idx(i2, j2 + 1)
    gp = sp.csr_matrix((np.r_[-np.ones(ng), np.ones(ng)] / hp, (np.r_[grow, grow], np.r_[a2, b2])), shape=(ng, N))
    avg_p = sp.csr_matrix((np.full(2 * ng, 0.5), (np.r_[grow, grow], np.r_[a2, b2])), shape=(ng, N))
    return {
        "gt": gt,
        "avg_t": avg_t,
        "s_face": np.sin((i + 1) * ht),
        "gp": gp,
        "avg_p": avg_p,
        "s_row": np.sin((i2 + 0.5) * ht),
        "ct": ct,
        "cp": cp,
        "avg_c": avg_c,
    }


@dataclass(frozen=True)
class LaplaceOperator:
    """Discrete Laplace-Beltrami operator ``L = diag(mass)^-1 @ stiffness``.

    ``stiffness`` is symmetric negative semi-definite with vanishing row sums;
    ``mass`` holds the d sigma_t quadrature weights.  Self-adjointness in the
    weighted inner product and the discrete divergence theorem follow.
    """

    grid: SphereGrid
    stiffness: sp.csr_matrix
    mass: np.ndarray

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return (self.stiffness @ u) / self.mass

    def matrix(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.mass) @ self.stiffness


def laplacian_operator(metric: MetricField) -> LaplaceOperator:
    metric.check()
    grid = metric.grid
    ops = _difference_ops(grid)
    J = metric.density()
    ginv = metric.inverse()
    if grid.is_axisymmetric:
        coeff = (ops["avg_t"] @ (J * ginv[:, 0])) * ops["s_face"] ** (grid.n - 2)
        scale = grid.dtheta * sphere_volume(grid.n - 2)
        S = -(ops["gt"].T @ sp.diags(coeff * scale) @ ops["gt"])
    else:
        scale = grid.dtheta * grid.dphi
        ct = (ops["avg_t"] @ (J * ginv[:, 0])) * ops["s_face"]
        cp = (ops["avg_p"] @ (J * ginv[:, 2])) / ops["s_row"]
        cc = ops["avg_c"] @ (J * ginv[:, 1])
        cross = ops["ct"].T @ sp.diags(cc) @ ops["cp"]
        S = -(
            ops["gt"].T @ sp.diags(ct) @ ops["gt"]
            + ops["gp"].T @ sp.diags(cp) @ ops["gp"]
            + cross
            + cross.T
        ) * scale
    S = sp.csr_matrix(S)
    S.sum_duplicates()
    return LaplaceOperator(grid, S, J * grid.weights)


def laplace_beltrami(field, metric: MetricField) -> ScalarField:
    """Apply Delta_{g} to a scalar field (divergence-form discretisation)."""
    vals = _values(field, metric.grid)
    return ScalarField(metric.grid, laplacian_operator(metric)(vals))
