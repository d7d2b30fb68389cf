import json

import numpy as np
import pytest

from nsbgk.config import SimConfig
from nsbgk.diagnostics import compute_row, row_columns
from nsbgk.domain import grid_from_config
from nsbgk.errors import (ChecksumError, ConfigError, ShapeError, SnapshotError,
                          UnsupportedVersionError)
from nsbgk.io import (DiagnosticsWriter, config_from_mapping, parse_config, read_diagnostics,
                      read_snapshot, write_iteration_trace, write_snapshot)
from nsbgk.stepper import IterationTrace, initial_state

CFG = SimConfig(dim=2, cells=4, v_cells=8, v_max=4.0, init="random", init_amplitude=0.1, seed=3)


@pytest.fixture
def snap_dir(tmp_path):
    grid = grid_from_config(CFG)
    state = initial_state(CFG, grid)
    write_snapshot(state, tmp_path / "s", grid, CFG)
    return tmp_path / "s", state, grid


def test_snapshot_round_trip_is_exact(snap_dir):
    path, state, grid = snap_dir
    snap = read_snapshot(path)
    assert snap.grid == grid and snap.config == CFG
    for name in ("f", "rho", "h", "u"):
        np.testing.assert_array_equal(getattr(snap.state, name), getattr(state, name))
    header = (path / "f.csv").read_text().splitlines()[0]
    assert header == "# axes=x1,x2,v1,v2 shape=4,4,8,8"


def test_snapshot_rewrite_is_byte_identical(snap_dir, tmp_path):
    path, _, grid = snap_dir
    snap = read_snapshot(path)
    write_snapshot(snap.state, tmp_path / "again", grid, snap.config)
    for name in ("manifest.json", "f.csv", "rho.csv", "h.csv", "u.csv"):
        assert (path / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_truncated_file_is_named(snap_dir):
    path, _, _ = snap_dir
    data = (path / "rho.csv").read_bytes()
    (path / "rho.csv").write_bytes(data[: len(data) // 2])
    with pytest.raises(ChecksumError, match="rho.csv"):
        read_snapshot(path)


def test_missing_file_and_manifest(snap_dir, tmp_path):
    path, _, _ = snap_dir
    (path / "h.csv").unlink()
    with pytest.raises(SnapshotError, match="h.csv: file missing"):
        read_snapshot(path)
    with pytest.raises(SnapshotError, match="no manifest.json"):
        read_snapshot(tmp_path)


def _edit_manifest(path, fn):
    m = json.loads((path / "manifest.json").read_text())
    fn(m)
    (path / "manifest.json").write_text(json.dumps(m))


def test_newer_schema_version_rejected(snap_dir):
    path, _, _ = snap_dir
    _edit_manifest(path, lambda m: m.update(schema_version=2))
    with pytest.raises(UnsupportedVersionError, match="schema_version 2 is newer"):
        read_snapshot(path)
    _edit_manifest(path, lambda m: m.pop("schema_version"))
    with pytest.raises(SnapshotError, match="missing schema_version"):
        read_snapshot(path)
    _edit_manifest(path, lambda m: m.update(schema_version=1) or m.pop("t"))
    with pytest.raises(SnapshotError, match="missing key"):
        read_snapshot(path)


def test_shape_mismatch_rejected(snap_dir):
    path, _, _ = snap_dir

    def shrink(m):
        m["grid"]["cells"] = [5, 4]
    _edit_manifest(path, shrink)
    with pytest.raises(ShapeError, match=r"f.csv: header shape \(4, 4, 8, 8\) does not match"):
        read_snapshot(path)


def test_config_unknown_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"gamma": 1.4, "viscosity": 0.1}))
    with pytest.raises(ConfigError, match="unknown config key.*viscosity"):
        parse_config(p)


def test_config_ini_and_json(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[physics]\ngamma = 2.0   # comment\nmu=0.3\n; note\n"
                   "implicit_viscosity = no\nv_max = none\ncells = 32\n")
    cfg = parse_config(ini)
    assert cfg.gamma == 2.0 and cfg.mu == 0.3 and cfg.implicit_viscosity is False
    assert cfg.v_max is None and cfg.cells == 32
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"gamma": 2, "cells": 32.0, "init": "perturbed"}))
    cfg = parse_config(js)
    assert cfg.gamma == 2.0 and isinstance(cfg.gamma, float) and cfg.cells == 32


@pytest.mark.parametrize("text, message", [
    ("gamma = 1.4\ngamma = 1.5\n", "duplicate key 'gamma'"),
    ("gamma 1.4\n", "expected 'key = value'"),
    ("cells = many\n", "cannot read 'many' as int"),
    ('{"gamma": [1]}', "config must be flat"),
    ('{"gamma": 1.4,}', "invalid JSON"),
    ("k = 2.5\n", "k must lie in the open interval"),
])
def test_config_errors(tmp_path, text, message):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError, match=message.replace("(", r"\(")):
        parse_config(p)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config file"):
        parse_config(tmp_path / "absent.json")


def test_config_from_mapping_type_checks():
    with pytest.raises(ConfigError, match="expected an integer"):
        config_from_mapping({"cells": 3.5})
    with pytest.raises(ConfigError, match="expected true/false"):
        config_from_mapping({"clamp_upper": 1})
    with pytest.raises(ConfigError, match="may not be null"):
        config_from_mapping({"gamma": None})


def test_diagnostics_csv_round_trip(tmp_path):
    cfg = SimConfig(cells=8, v_cells=16)
    grid = grid_from_config(cfg)
    state = initial_state(cfg, grid)
    row = compute_row(state, grid, cfg)
    path = tmp_path / "d.csv"
    with DiagnosticsWriter(path, 1) as w:
        w.write(row)
        w.write(row)
    data = read_diagnostics(path)
    assert list(data) == row_columns(1)
    assert data["L"][0] == row.values["L"]
    assert list(data["monitor"]) == ["ok", "ok"]


def test_iteration_trace_csv(tmp_path):
    tr = IterationTrace(np.array([0.0, 1.0]), E=[np.ones(2), np.ones(2)],
                        D=[np.zeros(2), np.full(2, 0.5)], sup_E=[1.0, 0.25], ratios=[0.25])
    path = tmp_path / "t.csv"
    write_iteration_trace(tr, path)
    lines = path.read_text().splitlines()
    assert lines == ["n,sup_E,r,sup_D", "0,1,,0", "1,0.25,0.25,0.5"]
