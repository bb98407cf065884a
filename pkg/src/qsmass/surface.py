"""Star-shaped hypersurfaces as radial graphs and their extrinsic geometry.

A surface is ``X(omega) = center + rho(omega) * omega`` over the sphere grid.
Geometry follows the outward-normal convention: round spheres have positive
mean curvature, ``H = (n - 1) / r``.

Second fundamental forms are stored in the same frame-normalised layout as
metrics (see :mod:`qsmass.grid`).  For axisymmetric grids the normal is
stored by its meridian-plane components ``(along axis, away from axis)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import (
    FULL2D,
    MetricField,
    SphereGrid,
    mixed_derivative,
    phi_derivatives,
    theta_derivatives,
)


@dataclass(frozen=True)
class RadialSurface:
    grid: SphereGrid
    rho: np.ndarray
    center: tuple = None

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float).reshape(-1)
        if rho.size != self.grid.size:
            raise ValueError(f"rho has {rho.size} values for {self.grid.size} nodes")
        if not np.all(np.isfinite(rho)):
            raise ValueError("rho contains non-finite values")
        if np.any(rho <= 0):
            raise ValueError(f"rho must be positive (node {int(np.argmin(rho))})")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        dim = 3 if self.grid.mode == FULL2D else self.grid.n
        center = (0.0,) * dim if self.center is None else tuple(float(c) for c in self.center)
        if len(center) != dim:
            raise ValueError(f"center must have {dim} coordinates")
        object.__setattr__(self, "center", center)

    def with_rho(self, rho) -> "RadialSurface":
        return RadialSurface(self.grid, rho, self.center)

    def positions(self) -> np.ndarray:
        """Node positions relative to the center (meridian plane if axisymmetric)."""
        return self.rho[:, None] * self.grid.unit_vectors()


@dataclass(frozen=True)
class LeafGeometry:
    """First and second fundamental forms plus derived curvatures of one leaf."""

    grid: SphereGrid
    metric: MetricField
    h: np.ndarray
    normal: np.ndarray
    H: np.ndarray
    hsq: np.ndarray
    twoK: np.ndarray
    kappa: np.ndarray
    radial_cos: np.ndarray

    @property
    def min_kappa(self) -> float:
        return float(self.kappa[:, 0].min())

    @property
    def max_kappa(self) -> float:
        return float(self.kappa[:, -1].max())


def _assemble(grid, g, h, normal, radial_cos) -> LeafGeometry:
    if grid.is_axisymmetric:
        k_m = h[:, 0] / g[:, 0]
        k_p = h[:, 1] / g[:, 1]
        m = grid.n - 2
        H = k_m + m * k_p
        hsq = k_m**2 + m * k_p**2
        kappa = np.column_stack([k_m] + [k_p] * m)
    else:
        E, F, G = g[:, 0], g[:, 1], g[:, 2]
        L, M, N = h[:, 0], h[:, 1], h[:, 2]
        det = E * G - F * F
        H = (E * N + G * L - 2 * F * M) / det
        gauss = (L * N - M * M) / det
        disc = np.sqrt(np.maximum(0.25 * H * H - gauss, 0.0))
        kappa = np.column_stack([0.5 * H - disc, 0.5 * H + disc])
        hsq = H * H - 2 * gauss
    kappa = np.sort(kappa, axis=1, kind="stable")
    twoK = H * H - hsq
    for name, arr in (("H", H), ("curvature", kappa)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite {name} values; degenerate surface data")
    return LeafGeometry(
        grid=grid,
        metric=MetricField(grid, g),
        h=h,
        normal=normal,
        H=H,
        hsq=hsq,
        twoK=twoK,
        kappa=kappa,
        radial_cos=radial_cos,
    )


def forms_from_radial(surface: RadialSurface) -> LeafGeometry:
    """Fundamental forms of the radial graph by centered differences of rho."""
    grid = surface.grid
    s, c = grid.sin_theta, grid.cos_theta
    rho2d = grid.reshape(surface.rho)
    r = surface.rho
    rt, rtt = (x.reshape(-1) for x in theta_derivatives(rho2d, grid))
    if grid.is_axisymmetric:
        # rtt - rt cot(theta) = sin(theta) d/dtheta(rt / sin(theta)); differencing the
        # even quotient keeps kappa_1 - kappa_2 = O(theta^2) at the pole rows
        rtt = s * theta_derivatives(rt / s, grid)[0] + rt * c / s
        a = r * r + rt * rt
        na = np.sqrt(a)
        g = np.column_stack([a, r * r])
        h = np.column_stack([
            (r * r + 2 * rt * rt - r * rtt) / na,
            (r * r - r * rt * c / s) / na,
        ])
        normal = np.column_stack([r * c + rt * s, r * s - rt * c]) / na[:, None]
        return _assemble(grid, g, h, normal, r / na)

    rp, rpp = (x.reshape(-1) for x in phi_derivatives(rho2d, grid))
    rtp = mixed_derivative(rho2d, grid).reshape(-1)
    q = rp / s  # phi-derivative in the orthonormal frame
    nn = np.sqrt(r * r + rt * rt + q * q)
    g = np.column_stack([r * r + rt * rt, rt * q, r * r + q * q])
    h = np.column_stack([
        r * r + 2 * rt * rt - r * rtt,
        2 * rt * q + r * q * c / s - r * rtp / s,
        r * r + 2 * q * q - r * rpp / (s * s) - r * rt * c / s,
    ]) / nn[:, None]
    phi = grid.phi
    omega = grid.unit_vectors()
    e_t = np.column_stack([c * np.cos(phi), c * np.sin(phi), -s])
    e_p = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])
    normal = (r[:, None] * omega - rt[:, None] * e_t - q[:, None] * e_p) / nn[:, None]
    return _assemble(grid, g, h, normal, r / nn)


def forms_from_embedding(grid: SphereGrid, X: np.ndarray) -> LeafGeometry:
    """Fundamental forms of a parametrised leaf ``X(sigma)`` given at the nodes.

    ``X`` holds positions relative to the star center: shape ``(N, 3)`` for
    full2d grids, meridian-plane ``(N, 2)`` for axisymmetric grids.  Used for
    leaves whose parametrisation follows normal trajectories rather than rays.
    """
    X = np.asarray(X, dtype=float)
    s = grid.sin_theta
    if grid.is_axisymmetric:
        # polar form X = r (cos psi, sin psi); q = psi - theta is odd about both
        # poles, so differencing r and q is exact whenever points stay on rays
        theta = grid.theta
        r = np.hypot(X[:, 0], X[:, 1])
        psi = np.arctan2(X[:, 1], X[:, 0])
        q = psi - theta
        cot = grid.cos_theta / s
        rt, _ = theta_derivatives(r, grid, parity=1)
        rtt = s * theta_derivatives(rt / s, grid)[0] + rt * cot
        _, qtt = theta_derivatives(q, grid, parity=-1)
        qt = s * theta_derivatives(q / s, grid)[0] + q * cot
        pt = 1.0 + qt
        a = rt * rt + (r * pt) ** 2
        na = np.sqrt(a)
        h_a = (r * r * pt**3 - r * rtt * pt + 2 * rt * rt * pt + r * rt * qtt) / na
        ratio = np.cos(q) + np.sin(q) * grid.cos_theta / s  # sin(psi) / sin(theta)
        b = (r * ratio) ** 2
        k_p = (r * pt - rt * np.cos(psi) / np.sin(psi)) / (r * na)
        e_r = np.column_stack([np.cos(psi), np.sin(psi)])
        e_p = np.column_stack([-np.sin(psi), np.cos(psi)])
        nu = ((r * pt)[:, None] * e_r - rt[:, None] * e_p) / na[:, None]
        g = np.column_stack([a, b])
        h = np.column_stack([h_a, k_p * b])
        return _assemble(grid, g, h, nu, r * pt / na)

    X2 = grid.reshape(X)
    Xt, Xtt = (v.reshape(-1, 3) for v in theta_derivatives(X2, grid))
    Xp, Xpp = (v.reshape(-1, 3) for v in phi_derivatives(X2, grid))
    Xtp = mixed_derivative(X2, grid).reshape(-1, 3)
    Xq = Xp / s[:, None]
    E = np.einsum("ij,ij->i", Xt, Xt)
    F = np.einsum("ij,ij->i", Xt, Xq)
    G = np.einsum("ij,ij->i", Xq, Xq)
    cr = np.cross(Xt, Xq)
    nu = cr / np.linalg.norm(cr, axis=1)[:, None]
    L = -np.einsum("ij,ij->i", Xtt, nu)
    M = -np.einsum("ij,ij->i", Xtp, nu) / s
    N = -np.einsum("ij,ij->i", Xpp, nu) / (s * s)
    g = np.column_stack([E, F, G])
    h = np.column_stack([L, M, N])
    radial_cos = np.einsum("ij,ij->i", nu, X) / np.linalg.norm(X, axis=1)
    return _assemble(grid, g, h, nu, radial_cos)


def intrinsic_scalar_curvature(metric: MetricField) -> np.ndarray:
    """Scalar curvature R(g) of an axisymmetric leaf metric, from g alone.

    Uses the warped-product form ``ds^2 + psi(s)^2 dOmega_{n-2}^2`` with
    ``psi = sqrt(b) sin(theta)`` and arc length ``ds = sqrt(a) dtheta``.
    Trigonometric factors are differentiated analytically so only the smooth
    even coefficients ``a`` and ``sqrt(b)`` see finite differences; this keeps
    the pole rows second-order accurate.
    """
    grid = metric.grid
    if not grid.is_axisymmetric:
        raise NotImplementedError("intrinsic curvature is only implemented for axisymmetric grids")
    k = grid.n - 2
    a, b = metric.comps[:, 0], metric.comps[:, 1]
    s, c = grid.sin_theta, grid.cos_theta
    q = np.sqrt(b)
    qt, qtt = theta_derivatives(q, grid)
    at, _ = theta_derivatives(a, grid)
    cot = c / s
    psi_ss_over_psi = ((qtt - q) + 2 * qt * cot - (qt + q * cot) * at / (2 * a)) / (a * q)
    R = -2 * k * psi_ss_over_psi
    if k > 1:
        one_minus = ((a - b) / (s * s) + b - 2 * q * qt * cot - qt * qt) / (a * b)
        R = R + k * (k - 1) * one_minus
    return R


def roundness(surface: RadialSurface) -> float:
    """Normalised radial spread ``(max rho - min rho) / mean rho`` about the center.

    Scale invariant, so it equals the roundness of ``e^{-t} F``.
    """
    rho = surface.rho
    mean = float(np.dot(rho, surface.grid.weights) / surface.grid.weights.sum())
    return float((rho.max() - rho.min()) / mean)


# -- constructors -------------------------------------------------------------


def sphere(grid: SphereGrid, radius: float = 1.0, center=None) -> RadialSurface:
    return RadialSurface(grid, np.full(grid.size, float(radius)), center)


def ellipsoid(grid: SphereGrid, axes, center=None) -> RadialSurface:
    """Ellipsoid with the given semi-axes; the last axis is the polar one.

    Axisymmetric grids need all equatorial semi-axes equal.
    """
    axes = [float(x) for x in axes]
    s, c = grid.sin_theta, grid.cos_theta
    if grid.is_axisymmetric:
        if len(axes) != grid.n or any(abs(x - axes[0]) > 0 for x in axes[:-1]):
            raise ValueError(f"axisymmetric ellipsoid needs {grid.n} axes with equal equatorial entries")
        inv = (s / axes[0]) ** 2 + (c / axes[-1]) ** 2
    else:
        if len(axes) != 3:
            raise ValueError("full2d ellipsoid needs three semi-axes")
        om = grid.unit_vectors()
        inv = sum((om[:, i] / axes[i]) ** 2 for i in range(3))
    return RadialSurface(grid, 1.0 / np.sqrt(inv), center)


def radial_perturbation(grid: SphereGrid, radius: float, amplitude: float, mode: int = 2,
                        azimuthal: int = 0, center=None) -> RadialSurface:
    """``rho = radius * (1 + amplitude * cos(mode * theta) * cos(azimuthal * phi))``.

    ``cos(k theta)`` is a polynomial in the axial coordinate, so the graph is
    smooth across the poles for every integer ``mode``.
    """
    pert = np.cos(mode * grid.theta)
    if azimuthal:
        if grid.is_axisymmetric:
            raise ValueError("azimuthal perturbations need a full2d grid")
        pert = np.sin(grid.theta) ** abs(azimuthal) * np.cos(azimuthal * grid.phi)
    return RadialSurface(grid, radius * (1.0 + amplitude * pert), center)


# -- snapshot files -------------------------------------------------------------

_MAGIC = "# qsmass-surface"


def write_snapshot(surface: RadialSurface, path) -> None:
    g = surface.grid
    center = ",".join(repr(float(x)) for x in surface.center)
    lines = [f"{_MAGIC} mode={g.mode} n={g.n} ntheta={g.ntheta} nphi={g.nphi} center={center}"]
    lines.extend(f"{v:.17g}" for v in surface.rho)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_snapshot(path) -> RadialSurface:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(_MAGIC):
        raise ValueError(f"{path}: not a surface snapshot")
    meta = dict(tok.split("=", 1) for tok in text[0][len(_MAGIC):].split())
    grid = SphereGrid(meta["mode"], int(meta["ntheta"]), int(meta["nphi"]), int(meta["n"]))
    center = tuple(float(x) for x in meta["center"].split(","))
    rho = np.array([float(line) for line in text[1:] if line.strip()])
    return RadialSurface(grid, rho, center)


def area_radius(metric: MetricField) -> float:
    """Radius of the round sphere with the same (n-1)-volume."""
    grid = metric.grid
    A = float(np.sum(metric.volume_weights()))
    return (A / grid.round_volume) ** (1.0 / (grid.n - 1))


__all__ = [
    "RadialSurface",
    "LeafGeometry",
    "forms_from_radial",
    "forms_from_embedding",
    "intrinsic_scalar_curvature",
    "roundness",
    "sphere",
    "ellipsoid",
    "radial_perturbation",
    "write_snapshot",
    "read_snapshot",
    "area_radius",
]
