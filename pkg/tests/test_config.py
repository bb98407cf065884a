from pathlib import Path

import pytest

from qsmass.config import DEFAULTS, RunConfig, parse_text
from qsmass.errors import ConfigError


def test_defaults_give_a_sphere_run():
    cfg = RunConfig.from_text("")
    assert cfg.surface["kind"] == "sphere" and cfg.surface["radius"] == 1.0
    assert cfg.grid == {"mode": "axisymmetric", "n": 3, "ntheta": 64, "nphi": None}
    assert cfg.flow["record_dt"] is None and cfg.flow["stop"] == "t_max"
    assert cfg.lapse["h_target"] == ("euclidean", 1.0)
    assert cfg.output_dir == Path("out")


def test_comments_and_whitespace():
    raw = parse_text("# header\n  surface.kind = ellipsoid   # trailing\n\nsurface.axes=1,1,1.5\n")
    assert raw == {"surface.kind": "ellipsoid", "surface.axes": "1,1,1.5"}
    cfg = RunConfig.from_text("surface.kind = ellipsoid\nsurface.axes = 1, 1, 1.5\n")
    assert cfg.surface["axes"] == (1.0, 1.0, 1.5)


@pytest.mark.parametrize("text,match", [
    ("surface.kind", "key = value"),
    ("surface.colour = red", "unknown key"),
    ("grid.n = 3\ngrid.n = 4", "duplicate"),
    ("surface.kind = torus", "surface.kind"),
    ("surface.radius = -1", "positive"),
    ("grid.ntheta = lots", "cannot read"),
    ("surface.kind = ellipsoid", "axes"),
    ("surface.kind = radial_perturbation\nsurface.amplitude = 1.2", "amplitude"),
    ("lapse.mass = -0.1", "non-negative"),
    ("lapse.h_target = scale:-2", "positive"),
    ("lapse.h_target = perturb:1.5", "below 1"),
    ("lapse.h_target = wobbly", "unknown form"),
    ("lapse.h_target = scale:x", "bad number"),
    ("surface.center = 0,a,0", "comma-separated"),
    ("foliation.source = magic", "foliation.source"),
    ("lapse.initial = explicit", "lapse.path is required"),
    ("surface.kind = snapshot\nsurface.path = missing.txt", "does not exist"),
])
def test_bad_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_text(text)


def test_relative_paths_resolve_against_the_config(tmp_path):
    (tmp_path / "u0.txt").write_text("1\n")
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("lapse.initial = explicit\nlapse.path = u0.txt\noutput.dir = res\n")
    cfg = RunConfig.load(cfg_path)
    assert cfg.lapse["path"] == tmp_path / "u0.txt"
    assert cfg.output_dir == tmp_path / "res"
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "nope.cfg")


def test_every_default_parses():
    text = "\n".join(f"{k} = {v}" for k, v in DEFAULTS.items())
    assert RunConfig.from_text(text).raw == DEFAULTS
