import numpy as np
import pytest

from qsmass.errors import AssumptionViolation, GlueMismatch, NotConvex
from qsmass.flow import run_flow
from qsmass.foliation import (
    DegenerateRecord,
    FoliationRecord,
    _replace,
    composite_band,
    concatenate,
    final_leaf,
    foliate_distance,
    foliate_from_flow,
    gauss_residual,
    require_valid,
    time_derivative,
    validate,
)
from qsmass.grid import MetricField, build_grid
from qsmass.oracles import DISTANCE, HRFLOW, SphereBandOracle, sphere_band_fields
from qsmass.surface import ellipsoid, forms_from_embedding, radial_perturbation, sphere


def _check_against_oracle(rec, oracle, tol):
    for k, t in enumerate(rec.times):
        ref = sphere_band_fields(oracle, t)
        round_ = MetricField.round(rec.grid).comps * ref.scale
        assert np.max(np.abs(rec.metrics[k] - round_)) <= tol * ref.scale
        for name in ("eta", "H1", "hsq1", "K", "H1p"):
            assert np.max(np.abs(getattr(rec, name)[k] - getattr(ref, name))) <= tol * max(1.0, abs(getattr(ref, name))), name


@pytest.mark.parametrize("n", [3, 4])
def test_distance_band_of_sphere_is_exact(n):
    g = build_grid("axisymmetric", 16, n=n)
    rec = foliate_distance(sphere(g, 1.5), 2.0, 0.25)
    assert len(rec) == 9
    _check_against_oracle(rec, SphereBandOracle(n, 1.5, DISTANCE), 1e-13)


def test_flow_band_of_sphere_matches_oracle():
    g = build_grid("axisymmetric", 32)
    rec = foliate_from_flow(run_flow(sphere(g), t_max=0.5, record_dt=0.01))
    fields = SphereBandOracle(3, 1.0, HRFLOW)
    # H1' comes from time differences of H1, which is constant here
    _check_against_oracle(rec, fields, 1e-6)


def test_full2d_distance_band_of_sphere(full):
    rec = foliate_distance(sphere(full, 1.0), 1.0, 0.5)
    _check_against_oracle(rec, SphereBandOracle(3, 1.0, DISTANCE), 1e-13)
    assert gauss_residual(rec) is None


def test_distance_band_area_grows_quadratically():
    g = build_grid("full2d", 24)
    s = ellipsoid(g, (1, 1.2, 1.5))
    rec = foliate_distance(s, 1.0, 0.1)
    A = rec.areas()
    # Steiner formula: A(t) = A + t int H + t^2 int K_gauss (exact for the parallel forms)
    t = rec.times
    coef = np.polyfit(t, A, 2)
    assert np.allclose(np.polyval(coef, t), A, rtol=1e-12)
    assert coef[0] == pytest.approx(4 * np.pi, rel=5e-3)  # int K dA = 2 pi chi


def test_stored_fields_satisfy_gauss_identity():
    g = build_grid("full2d", 16)
    rec = foliate_distance(ellipsoid(g, (1, 1.2, 1.5)), 1.0, 0.5)
    assert np.allclose(rec.K, 0.5 * (rec.H1**2 - rec.hsq1) / rec.eta**2, rtol=1e-13)
    assert np.array_equal(rec.H1p, -rec.hsq1)


def test_analytic_mean_curvature_rate_matches_differences():
    g = build_grid("axisymmetric", 32)
    rec = foliate_distance(ellipsoid(g, (1, 1, 1.5)), 0.2, 0.001)
    fd = time_derivative(rec.times, rec.H1)
    assert np.max(np.abs(fd - rec.H1p)) < 5e-5


@pytest.mark.parametrize("n", [3, 4])
def test_gauss_residual_converges_at_second_order(n):
    errs = []
    for nt in (32, 64, 128):
        g = build_grid("axisymmetric", nt, n=n)
        rec = foliate_distance(radial_perturbation(g, 1.0, 0.1, mode=2), 1.0, 0.5)
        errs.append(gauss_residual(rec).max())
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.8


def test_distance_band_needs_convexity():
    g = build_grid("axisymmetric", 32, n=4)
    with pytest.raises(NotConvex, match="node"):
        foliate_distance(radial_perturbation(g, 1.0, 0.24, mode=2), 1.0, 0.1)


def test_distance_band_arguments(axi):
    with pytest.raises(ValueError):
        foliate_distance(sphere(axi), 0.0, 0.1)
    with pytest.raises(ValueError):
        foliate_distance(forms_from_embedding(axi, sphere(axi).positions()), 1.0, 0.1)
    with pytest.raises(TypeError):
        foliate_distance("sphere", 1.0, 0.1)


def test_single_leaf_is_degenerate(axi):
    rec = foliate_distance(sphere(axi), 1.0, 0.5)
    with pytest.raises(DegenerateRecord):
        _replace(rec, times=rec.times[:1], metrics=rec.metrics[:1], eta=rec.eta[:1], H1=rec.H1[:1],
                 hsq1=rec.hsq1[:1], K=rec.K[:1], H1p=rec.H1p[:1], positions=None)
    with pytest.raises(DegenerateRecord):
        foliate_from_flow(run_flow(sphere(axi), until_convex=True))
    assert issubclass(DegenerateRecord, AssumptionViolation)


def test_record_validation(axi):
    rec = foliate_distance(sphere(axi), 1.0, 0.5)
    with pytest.raises(ValueError):
        _replace(rec, times=rec.times[::-1])
    bad = rec.eta.copy()
    bad[1, 3] = np.nan
    with pytest.raises(ValueError):
        _replace(rec, eta=bad)
    with pytest.raises(ValueError):
        _replace(rec, eta=-rec.eta)


def _split(rec, j):
    head = _replace(rec, **{name: getattr(rec, name)[: j + 1] for name in
                            ("times", "metrics", "eta", "H1", "hsq1", "K", "H1p", "positions")})
    tail = _replace(rec, **{name: getattr(rec, name)[j:] for name in
                            ("metrics", "eta", "H1", "hsq1", "K", "H1p", "positions")},
                    times=rec.times[j:] - rec.times[j])
    return head, tail


def test_split_and_rejoin_reproduces_the_band():
    g = build_grid("axisymmetric", 32)
    rec = foliate_distance(ellipsoid(g, (1, 1, 1.5)), 2.0, 0.25)
    head, tail = _split(rec, 3)
    joined = concatenate(head, tail)
    for name in ("times", "metrics", "eta", "H1", "hsq1", "K", "H1p", "positions"):
        assert np.allclose(getattr(joined, name), getattr(rec, name), rtol=0, atol=1e-15), name
    assert list(joined.junctions) == [3]
    assert np.array_equal(joined.after(3).K, rec.K[3])
    assert np.array_equal(joined.after(2).eta, rec.eta[2])


def test_concatenate_rejects_mismatched_leaves(axi):
    a = foliate_distance(sphere(axi, 1.0), 1.0, 0.5)
    b = foliate_distance(sphere(axi, 1.0), 1.0, 0.5)
    with pytest.raises(GlueMismatch):
        concatenate(a, b)  # a ends at radius 2, b starts at radius 1
    with pytest.raises(GlueMismatch):
        concatenate(a, foliate_distance(sphere(build_grid("axisymmetric", 32), 2.0), 1.0, 0.5))


def test_concatenated_junctions_accumulate(axi):
    rec = foliate_distance(sphere(axi), 3.0, 0.5)
    a, rest = _split(rec, 2)
    b, c = _split(rest, 2)
    joined = concatenate(a, concatenate(b, c))
    assert sorted(joined.junctions) == [2, 4]
    assert np.allclose(joined.times, rec.times)


def test_composite_band_hands_off_at_a_convex_leaf():
    g = build_grid("axisymmetric", 32, n=4)
    rec, traj = composite_band(radial_perturbation(g, 1.0, 0.24, mode=2), 1.0, 0.1, flow_t_max=2.0)
    (j,) = rec.junctions
    assert rec.times[j] == pytest.approx(traj.final.t)
    assert forms_from_embedding(g, rec.positions[j]).min_kappa > 0
    assert rec.origin == "flow+distance"
    assert np.all(rec.eta[j + 1:] == 1.0)
    assert validate(rec).passed


def test_composite_band_on_convex_input_is_a_distance_band(axi):
    rec, traj = composite_band(sphere(axi), 1.0, 0.5, flow_t_max=1.0)
    assert rec.origin == "distance" and len(traj) == 1


def test_final_leaf_uses_node_positions(axi):
    rec = foliate_from_flow(run_flow(ellipsoid(axi, (1, 1, 1.5)), t_max=0.1, record_dt=0.05))
    leaf = final_leaf(rec)
    assert np.allclose(leaf.metric.comps, rec.metrics[-1])
    with pytest.raises(ValueError):
        final_leaf(_replace(rec, positions=None))


def test_validation_reports_first_failing_leaf(axi):
    rec = foliate_distance(sphere(axi), 1.0, 0.25)
    assert validate(rec).passed
    K = rec.K.copy()
    K[2, 5] = -1.0
    K[3, 0] = -1.0
    bad = _replace(rec, K=K)
    rep = validate(bad)
    assert not rep.passed and rep.failing_leaf == 2
    with pytest.raises(AssumptionViolation, match="leaf 2"):
        require_valid(bad)


def test_time_derivative_is_exact_on_quadratics():
    t = np.array([0.0, 0.1, 0.25, 0.3, 0.7])
    v = (3 * t**2 - t + 2)[:, None] * np.ones((1, 4))
    assert np.allclose(time_derivative(t, v), (6 * t - 1)[:, None], atol=1e-12)


def test_band_outputs(tmp_path, axi):
    rec = foliate_distance(sphere(axi), 1.0, 0.5)
    rec.write_csv(tmp_path / "band.csv")
    lines = (tmp_path / "band.csv").read_text().splitlines()
    assert lines[0] == "t,min_H1,max_H1,min_K,max_K,min_eta,max_eta" and len(lines) == 4
    rec.write_fields(tmp_path / "fields.txt", names=("eta",))
    text = (tmp_path / "fields.txt").read_text().splitlines()
    assert len(text) == 3 * (1 + axi.size)
    assert isinstance(rec, FoliationRecord) and rec.shifted(2.0).times[0] == 2.0
