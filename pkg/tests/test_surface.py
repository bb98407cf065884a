import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsmass.grid import build_grid
from qsmass.surface import (
    RadialSurface,
    area_radius,
    ellipsoid,
    forms_from_embedding,
    forms_from_radial,
    intrinsic_scalar_curvature,
    radial_perturbation,
    read_snapshot,
    roundness,
    sphere,
    write_snapshot,
)


@pytest.mark.parametrize("mode,n", [("axisymmetric", 3), ("axisymmetric", 4), ("axisymmetric", 5), ("full2d", 3)])
def test_round_sphere_is_exact(mode, n):
    g = build_grid(mode, 16, n=n)
    geo = forms_from_radial(sphere(g, 2.0))
    assert np.allclose(geo.kappa, 0.5, atol=1e-14)
    assert np.allclose(geo.H, (n - 1) / 2.0, atol=1e-13)
    assert np.allclose(geo.twoK, (n - 1) * (n - 2) / 4.0, atol=1e-13)
    assert np.allclose(geo.radial_cos, 1.0)
    assert area_radius(geo.metric) == pytest.approx(2.0, rel=1e-13)


def _ellipsoid_reference(X, axes):
    # Gauss and mean curvature of x^2/a^2 + y^2/b^2 + z^2/c^2 = 1 at the points X
    a, b, c = axes
    x, y, z = X.T
    w = x**2 / a**4 + y**2 / b**4 + z**2 / c**4
    gauss = 1.0 / (a * b * c) ** 2 / w**2
    mean = (x**2 + y**2 + z**2 - a * a - b * b - c * c) / ((a * b * c) ** 2 * w**1.5)
    return gauss, -mean


def test_triaxial_ellipsoid_curvatures_converge():
    axes = (1.0, 1.2, 1.5)
    errs = []
    for nt in (32, 64):
        g = build_grid("full2d", nt)
        surf = ellipsoid(g, axes)
        geo = forms_from_radial(surf)
        K, H = _ellipsoid_reference(surf.positions(), axes)
        errs.append((np.max(np.abs(geo.twoK / 2 - K)), np.max(np.abs(geo.H - H))))
    assert errs[1][0] < 1.5e-2 and errs[1][1] < 1e-2
    assert errs[0][0] / errs[1][0] > 3 and errs[0][1] / errs[1][1] > 3


def test_axisymmetric_ellipsoid_curvatures_converge():
    errs = []
    for nt in (32, 64):
        g = build_grid("axisymmetric", nt)
        surf = ellipsoid(g, (1, 1, 1.5))
        geo = forms_from_radial(surf)
        along, away = surf.positions().T
        K, H = _ellipsoid_reference(np.column_stack([away, 0 * away, along]), (1, 1, 1.5))
        errs.append(max(np.max(np.abs(geo.twoK / 2 - K)), np.max(np.abs(geo.H - H))))
    assert errs[1] < 2e-2 and errs[0] / errs[1] > 3.5


@pytest.mark.parametrize("n", [3, 4])
def test_embedding_forms_agree_with_radial_forms(n):
    g = build_grid("axisymmetric", 48, n=n)
    s = radial_perturbation(g, 1.0, 0.2, mode=3)
    a, b = forms_from_radial(s), forms_from_embedding(g, s.positions())
    for name in ("H", "hsq", "twoK"):
        assert np.max(np.abs(getattr(a, name) - getattr(b, name))) < 1e-11
    assert np.max(np.abs(a.metric.comps - b.metric.comps)) < 1e-12
    assert np.max(np.abs(a.normal - b.normal)) < 1e-12


def test_full2d_embedding_forms_converge_to_radial_forms():
    errs = []
    for nt in (16, 32):
        g = build_grid("full2d", nt)
        s = radial_perturbation(g, 1.0, 0.1, mode=2, azimuthal=2)
        a, b = forms_from_radial(s), forms_from_embedding(g, s.positions())
        errs.append(np.max(np.abs(a.H - b.H)))
    assert errs[1] < 1e-2 and errs[0] / errs[1] > 3


def test_normal_is_outward_unit():
    g = build_grid("full2d", 16)
    s = ellipsoid(g, (1, 1.2, 1.5))
    geo = forms_from_radial(s)
    assert np.allclose(np.linalg.norm(geo.normal, axis=1), 1.0)
    assert np.all(np.einsum("ij,ij->i", geo.normal, s.positions()) > 0)


@pytest.mark.parametrize("n", [3, 4])
def test_intrinsic_curvature_agrees_with_gauss_identity(n):
    errs = []
    for nt in (32, 64):
        g = build_grid("axisymmetric", nt, n=n)
        geo = forms_from_radial(radial_perturbation(g, 1.0, 0.15, mode=2))
        errs.append(np.max(np.abs(intrinsic_scalar_curvature(geo.metric) - geo.twoK)))
    assert errs[0] / errs[1] > 3.5


def test_intrinsic_curvature_needs_axisymmetry(full):
    with pytest.raises(NotImplementedError):
        intrinsic_scalar_curvature(forms_from_radial(sphere(full)).metric)


def test_constructor_validation(axi, full):
    with pytest.raises(ValueError):
        RadialSurface(axi, -np.ones(axi.size))
    with pytest.raises(ValueError):
        RadialSurface(axi, np.ones(3))
    with pytest.raises(ValueError):
        ellipsoid(axi, (1, 1.2, 1.5))
    with pytest.raises(ValueError):
        radial_perturbation(axi, 1.0, 0.1, azimuthal=2)
    with pytest.raises(ValueError):
        sphere(full, 1.0, center=(0, 0))


@given(scale=st.floats(0.01, 100), amp=st.floats(-0.5, 0.5), mode=st.integers(1, 6))
def test_roundness_is_scale_invariant(scale, amp, mode):
    g = build_grid("axisymmetric", 16)
    s = radial_perturbation(g, 1.0, amp, mode)
    r = roundness(s)
    assert roundness(s.with_rho(scale * s.rho)) == pytest.approx(r, rel=1e-12, abs=1e-15)
    assert r >= 0


@given(scale=st.floats(0.1, 10), amp=st.floats(-0.3, 0.3))
def test_curvatures_scale_inversely(scale, amp):
    g = build_grid("axisymmetric", 16, n=4)
    s = radial_perturbation(g, 1.0, amp, 2)
    a = forms_from_radial(s)
    b = forms_from_radial(s.with_rho(scale * s.rho))
    assert np.allclose(b.kappa * scale, a.kappa, rtol=1e-10, atol=1e-12)


def test_snapshot_round_trip(tmp_path, full):
    s = radial_perturbation(full, 1.3, 0.2, mode=2, azimuthal=1, center=(0.1, 0, -0.2))
    path = tmp_path / "surf.txt"
    write_snapshot(s, path)
    back = read_snapshot(path)
    assert back.grid == s.grid and back.center == s.center
    assert np.array_equal(back.rho, s.rho)
    write_snapshot(back, tmp_path / "again.txt")
    assert path.read_bytes() == (tmp_path / "again.txt").read_bytes()


def test_snapshot_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("1\n2\n")
    with pytest.raises(ValueError):
        read_snapshot(p)


def test_sphere_area_radius_four_dimensions():
    g = build_grid("axisymmetric", 32, n=4)
    geo = forms_from_radial(sphere(g, 3.0))
    assert area_radius(geo.metric) == pytest.approx(3.0, rel=1e-13)
    assert geo.metric.volume_weights().sum() == pytest.approx(2 * math.pi**2 * 27, rel=1e-13)
