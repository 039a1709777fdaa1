from pathlib import Path

import numpy as np
import pytest
import yaml

from khdress.config import RunConfig, apply_overrides, load_config, parse_config, parse_grid
from khdress.errors import ConfigError
from khdress.units import BOHR_NM

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def base(**extra):
    d = {"surface": {"kind": "cylinder", "params": {"R": 2.0}, "domain": [[0, "2pi"], [0, 10]], "resolution": [32, 32]}}
    d.update(extra)
    return d


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    cfg.surface_spec()


def test_pi_expressions_and_units():
    cfg = parse_config(base())
    spec = cfg.surface_spec()
    assert np.isclose(spec.domain[0][1], 2 * np.pi) and spec.periodic == (True, False)
    d = base()
    d["surface"]["params"]["R"] = "1 nm"
    d["surface"]["domain"] = [["-pi/2", "pi/2"], ["0 nm", "5 nm"]]
    spec = parse_config(d).surface_spec()
    assert np.isclose(spec.params["R"], 1 / BOHR_NM)
    assert np.isclose(spec.domain[1][1], 5 / BOHR_NM) and np.isclose(spec.domain[0][0], -np.pi / 2)


def test_unknown_key_reports_path():
    d = base(dressing={"nmax": 3})
    with pytest.raises(ConfigError, match="dressing.nmax"):
        parse_config(d)


@pytest.mark.parametrize("section,value", [
    ("dressing", {"n_theta": 65}),
    ("dressing", {"n_theta": 32}),
    ("dressing", {"n_max": 0}),
    ("dressing", {"alpha0": [-1.0]}),
    ("drive", {"omega": 0}),
    ("solve", {"boundary": "neumann"}),
])
def test_invalid_values(section, value):
    with pytest.raises(ConfigError):
        parse_config(base(**{section: value}))


def test_negative_radius_is_config_error():
    d = base()
    d["surface"]["params"]["R"] = -1
    with pytest.raises(ConfigError, match="R"):
        parse_config(d).surface_spec()


def test_alpha0_scalar_becomes_list():
    cfg = parse_config(base(dressing={"alpha0": "0.1 nm"}))
    assert np.allclose(cfg.alpha0_list(), [0.1 / BOHR_NM])
    assert parse_config(base()).alpha0_list() == [None]


def test_overrides_win():
    cfg = apply_overrides(parse_config(base()), (16, 20), 3, 128, ["0.5"])
    assert cfg.surface.resolution == (16, 20) and cfg.dressing.n_max == 3
    assert cfg.dressing.n_theta == 128 and cfg.alpha0_list() == [0.5]
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ntheta=7)


def test_parse_grid():
    assert parse_grid("64x32") == (64, 32)
    with pytest.raises(ConfigError):
        parse_grid("64")


def test_cosine_potential():
    cfg = parse_config(base(potential={"kind": "cosine", "amplitude": 2.0, "k": 1.3, "axis": 1}))
    V = cfg.potential_function()
    assert np.isclose(V(0.0, 1.0), 2 * np.cos(1.3))


def test_monge_heights_from_csv(tmp_path):
    from khdress.csvio import grid_columns, write_csv
    from khdress.grid import Grid

    g = Grid.uniform(((-2, 2), (-2, 2)), (21, 21))
    X, Y = g.mesh()
    write_csv(tmp_path / "h.csv", grid_columns(g, h=np.exp(-(X**2 + Y**2))))
    data = {"surface": {"kind": "monge", "params": {"heights": "h.csv"}, "domain": [[-1, 1], [-1, 1]],
                        "resolution": [16, 16]}}
    (tmp_path / "run.yaml").write_text(yaml.safe_dump(data))
    spec = load_config(tmp_path / "run.yaml").surface_spec()
    assert spec.params["heights"].shape == (21, 21)


def test_bad_yaml(tmp_path):
    (tmp_path / "x.yaml").write_text("surface: [unclosed")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "x.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    with pytest.raises(ConfigError):
        parse_config([1, 2])


def test_published_schema_is_current():
    import json

    path = CONFIGS.parent / "docs" / "config_schema.json"
    assert json.loads(path.read_text()) == json.loads(json.dumps(RunConfig.model_json_schema()))
