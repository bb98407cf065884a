import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsmass.errors import GridError
from qsmass.grid import (
    MetricField,
    ScalarField,
    area,
    build_grid,
    integrate,
    laplace_beltrami,
    laplacian_operator,
    phi_derivatives,
    sphere_volume,
    theta_derivatives,
)


def test_grid_rejects_bad_shapes():
    with pytest.raises(GridError):
        build_grid("axisymmetric", 4)
    with pytest.raises(GridError):
        build_grid("hexagonal", 32)
    with pytest.raises(GridError):
        build_grid("axisymmetric", 32, n=2)


def test_grids_are_value_objects():
    assert build_grid("full2d", 16) == build_grid("full2d", 16, 32)
    assert build_grid("full2d", 16) != build_grid("full2d", 16, 48)
    assert len({build_grid("axisymmetric", 32), build_grid("axisymmetric", 32)}) == 1


@pytest.mark.parametrize("mode,n,vol", [
    ("full2d", 3, 4 * math.pi),
    ("axisymmetric", 3, 4 * math.pi),
    ("axisymmetric", 4, 2 * math.pi**2),
    ("axisymmetric", 5, 8 * math.pi**2 / 3),
])
def test_round_weights_sum_to_sphere_volume(mode, n, vol):
    g = build_grid(mode, 24, n=n)
    assert g.weights.sum() == pytest.approx(vol, rel=1e-13)
    assert g.round_volume == pytest.approx(sphere_volume(n - 1), rel=1e-15)


def test_no_node_on_a_pole():
    g = build_grid("full2d", 16)
    assert g.sin_theta.min() > 0


def test_integrate_and_area():
    g = build_grid("axisymmetric", 128)
    round2 = MetricField.round(g, 2.0)
    assert area(round2) == pytest.approx(16 * math.pi, rel=1e-12)
    assert integrate(g.cos_theta**2, MetricField.round(g)) == pytest.approx(4 * math.pi / 3, rel=1e-4)
    assert integrate(3.0, MetricField.round(g)) == pytest.approx(12 * math.pi, rel=1e-12)


def test_field_size_is_checked(axi):
    with pytest.raises(GridError):
        integrate(np.ones(3), MetricField.round(axi))
    with pytest.raises(GridError):
        ScalarField(axi, np.ones(5))
    with pytest.raises(GridError):
        MetricField(axi, np.ones((axi.size, 3)))


def test_metric_positivity(axi):
    comps = np.ones((axi.size, 2))
    comps[7, 1] = -1.0
    m = MetricField(axi, comps)
    assert not m.is_positive_definite()
    with pytest.raises(GridError, match="node 7"):
        laplacian_operator(m)


def test_theta_derivatives_across_poles():
    g = build_grid("axisymmetric", 128)
    d1, d2 = theta_derivatives(g.cos_theta, g)
    assert np.max(np.abs(d1 + g.sin_theta)) < 1e-3
    assert np.max(np.abs(d2 + g.cos_theta)) < 1e-3
    # odd functions change sign through the pole
    o1, _ = theta_derivatives(g.sin_theta, g, parity=-1)
    assert np.max(np.abs(o1 - g.cos_theta)) < 1e-3


def test_phi_derivatives_converge_at_second_order():
    errs = []
    for nphi in (32, 64):
        g = build_grid("full2d", 16, nphi)
        v = g.reshape(np.cos(2 * g.phi))
        d1, d2 = phi_derivatives(v, g)
        errs.append((np.max(np.abs(d1 + 2 * g.reshape(np.sin(2 * g.phi)))), np.max(np.abs(d2 + 4 * v))))
    assert errs[0][0] / errs[1][0] > 3.8
    assert errs[0][1] / errs[1][1] > 3.8


@pytest.mark.parametrize("mode,n", [("axisymmetric", 3), ("axisymmetric", 4), ("full2d", 3)])
def test_laplacian_eigenfunctions_converge_at_second_order(mode, n):
    errs = []
    for nt in (16, 32, 64):
        g = build_grid(mode, nt, n=n)
        L = laplacian_operator(MetricField.round(g, 2.0))
        z = g.cos_theta
        errs.append(np.max(np.abs(L(z) + (n - 1) * z / 4.0)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_laplacian_of_degree_two_harmonic():
    g = build_grid("full2d", 48)
    x = g.sin_theta * np.cos(g.phi)
    y = g.sin_theta * np.sin(g.phi)
    f = x * y  # degree-2 harmonic: eigenvalue -6
    out = laplace_beltrami(f, MetricField.round(g))
    assert np.max(np.abs(np.asarray(out) + 6 * f)) < 1e-2


def _random_metric(g, coeffs):
    c = np.asarray(coeffs)
    base = 1.0 + 0.3 * np.tanh(c[0] * g.cos_theta + c[1] * g.cos_theta**2)
    other = 1.0 + 0.3 * np.tanh(c[2] * g.cos_theta**2)
    if g.is_axisymmetric:
        return MetricField(g, np.column_stack([base, other]))
    cross = 0.2 * np.tanh(c[3] * g.sin_theta * np.sin(g.phi))
    return MetricField(g, np.column_stack([base, cross, other]))


GRIDS = [build_grid("axisymmetric", 12), build_grid("axisymmetric", 12, n=4), build_grid("full2d", 8)]
coeffs = st.lists(st.floats(-2, 2), min_size=4, max_size=4)


@given(coeffs=coeffs, which=st.integers(0, 2), seed=st.integers(0, 2**31))
def test_laplacian_self_adjoint_and_divergence_free(coeffs, which, seed):
    g = GRIDS[which]
    L = laplacian_operator(_random_metric(g, coeffs))
    r = np.random.default_rng(seed)
    u, v = r.standard_normal(g.size), r.standard_normal(g.size)
    w = L.mass
    scale = np.linalg.norm(u) * np.linalg.norm(v) * abs(L.stiffness).max()
    assert abs(np.dot(w * L(u), v) - np.dot(u, w * L(v))) <= 1e-12 * scale
    assert abs(np.dot(w, L(u))) <= 1e-12 * np.linalg.norm(u) * abs(L.stiffness).max() * g.size
    assert np.dot(w * L(u), u) <= 1e-12 * scale
    assert np.max(np.abs(L(np.ones(g.size)))) < 1e-10


def test_weights_are_positive_cell_measures():
    g = build_grid("full2d", 16)
    assert np.all(g.weights > 0)
    rows = g.reshape(g.weights).sum(axis=1)
    # cell measure of a colatitude band: 2 pi (cos a - cos b)
    edges = np.linspace(0, np.pi, 17)
    assert np.allclose(rows, 2 * np.pi * (np.cos(edges[:-1]) - np.cos(edges[1:])), rtol=1e-13)
