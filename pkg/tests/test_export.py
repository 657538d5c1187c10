import csv
import json

import numpy as np
import pytest

from caplab.capacity import solve_potential
from caplab.export import (
    read_config_line,
    read_field_vtk,
    write_capacity_json,
    write_field_csv,
    write_field_vtk,
    write_levelset_csv,
    write_metric_json,
)
from caplab.grid import CompactMask, DomainConfig, build_domain
from caplab.metric import OptConfig, modulus_metric, mu_sphere, unit_directions
from caplab.oracles import grotzsch_capacity

CONFIG = {"command": "test", "seed": 3, "domain": {"dim": 2}}


def ring(dim, cells):
    d = build_domain(DomainConfig.ball(dim, 1.0, cells))
    X = d.spec.centers()
    return d, CompactMask(np.sqrt(sum(x * x for x in X)) <= 0.5, d)


@pytest.fixture(scope="module")
def result2d():
    return solve_potential(*ring(2, 20), 2)


@pytest.mark.parametrize("dim,cells", [(2, 20), (3, 9)])
def test_vtk_round_trip(tmp_path, dim, cells):
    d, K = ring(dim, cells)
    res = solve_potential(d, K, dim)
    path = write_field_vtk(tmp_path / "u.vtk", res, CONFIG)
    back = read_field_vtk(path)
    np.testing.assert_array_equal(back, res.field.values)
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"POINT_DATA {res.field.values.size}" in text
    side = json.loads((tmp_path / "u.vtk.config.json").read_text())
    assert side == CONFIG


def test_vtk_axis_order(tmp_path, result2d):
    # x varies fastest in the legacy format
    path = write_field_vtk(tmp_path / "u.vtk", result2d, CONFIG)
    lines = path.read_text().splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith("LOOKUP_TABLE")) + 1
    u = result2d.field.values
    assert float(lines[start + 1]) == u[1, 0]
    assert float(lines[start + u.shape[0]]) == u[0, 1]


def test_field_csv(tmp_path, result2d):
    path = write_field_csv(tmp_path / "u.csv", result2d, CONFIG)
    assert read_config_line(path) == CONFIG
    with path.open() as f:
        next(f)
        rows = list(csv.DictReader(f))
    u = result2d.field.values
    assert len(rows) == u.size
    for r in rows[::37]:
        assert float(r["value"]) == u[int(r["i"]), int(r["j"])]


def test_missing_config_line(tmp_path):
    p = tmp_path / "plain.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_config_line(p)


def test_capacity_json(tmp_path, result2d):
    path = write_capacity_json(tmp_path / "c.json", result2d, CONFIG)
    data = json.loads(path.read_text())
    assert data["config"] == CONFIG
    assert data["result"]["value"] == result2d.value


def test_metric_json_and_levelset_csv(tmp_path):
    d = build_domain(DomainConfig.ball(2, 1.0, 33, margin=0.06))
    opt = OptConfig(m=0)
    res = modulus_metric(d, (0.0, 0.0), (0.3, 0.0), opt=opt)
    data = json.loads(write_metric_json(tmp_path / "m.json", res, CONFIG).read_text())
    assert data["result"]["value"] == res.value and data["config"] == CONFIG

    ls = mu_sphere(d, (0.0, 0.0), grotzsch_capacity(0.3), unit_directions(2, 4), opt=opt)
    path = write_levelset_csv(tmp_path / "ls.csv", ls, CONFIG)
    assert read_config_line(path) == CONFIG
    with path.open() as f:
        next(f)
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    for r, s in zip(rows, ls.samples):
        assert float(r["radius"]) == s.radius
        assert float(r["x"]) == pytest.approx(float(r["dx"]) * s.radius)
