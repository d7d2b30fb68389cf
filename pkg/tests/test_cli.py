import json
import subprocess
import sys

import numpy as np
import pytest

from nsbgk.cli import main
from nsbgk.io import read_diagnostics, read_snapshot

SMALL = {"cells": 8, "v_cells": 16, "v_max": 6.0, "dt": 0.01, "t_final": 0.05}


def _config(tmp_path, **over):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**SMALL, **over}))
    return str(p)


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_flag_is_exit_1(capsys, tmp_path):
    assert main(["run"]) == 1
    assert "--out" in capsys.readouterr().err
    assert main(["run", "--out", str(tmp_path), "--snapshot-every", "x"]) == 1


def test_run_equilibrium(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", _config(tmp_path), "--out", str(out)]) == 0
    d = read_diagnostics(out / "diagnostics.csv")
    assert d["t"].size == 6
    assert d["drift_particle_mass"].max() <= 1e-8
    assert d["drift_fluid_mass"].max() <= 1e-8
    assert d["drift_momentum"].max() <= 1e-8
    assert set(d["monitor"]) == {"ok"}
    assert sorted(p.name for p in out.glob("snap_*")) == ["snap_000000", "snap_000005"]
    assert "completed 5 steps" in capsys.readouterr().out


def test_run_resume_continues_time(tmp_path):
    first = tmp_path / "a"
    cfg = _config(tmp_path, init="perturbed", init_amplitude=0.05)
    assert main(["run", "--config", cfg, "--out", str(first)]) == 0
    cfg2 = _config(tmp_path, init="perturbed", init_amplitude=0.05, t_final=0.08)
    second = tmp_path / "b"
    assert main(["run", "--config", cfg2, "--out", str(second),
                 "--resume", str(first / "snap_000005")]) == 0
    d = read_diagnostics(second / "diagnostics.csv")
    np.testing.assert_allclose(d["t"], [0.05, 0.06, 0.07, 0.08])
    assert read_snapshot(second / "snap_000003").state.t == pytest.approx(0.08)


def test_resume_grid_mismatch_is_exit_1(tmp_path, capsys):
    first = tmp_path / "a"
    assert main(["run", "--config", _config(tmp_path), "--out", str(first)]) == 0
    cfg = _config(tmp_path, cells=16)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"),
                 "--resume", str(first / "snap_000005")]) == 1
    assert "does not match" in capsys.readouterr().err


def test_invalid_config_is_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"k": 3.0}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "k must lie in the open interval (1,2)" in capsys.readouterr().err


def test_abort_is_exit_2_with_dump(tmp_path, capsys):
    cfg = _config(tmp_path, init_rho=0.01, delta=0.9)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 2
    err = capsys.readouterr().err
    assert "aborted" in err and "abort_dump" in err
    assert (out / "abort_dump" / "manifest.json").exists()


def test_iterate_writes_trace(tmp_path):
    cfg = _config(tmp_path, init="perturbed", init_amplitude=0.05, dt=0.005)
    out = tmp_path / "it"
    assert main(["iterate", "--config", cfg, "--out", str(out), "--horizon", "0.02",
                 "--max-iters", "3", "--tol", "1e-30"]) == 0
    lines = (out / "iteration_trace.csv").read_text().splitlines()
    assert lines[0] == "n,sup_E,r,sup_D"
    assert len(lines) == 4
    r = [float(line.split(",")[2]) for line in lines[2:]]
    assert all(0 < x < 1 for x in r)


def test_diagnose_snapshot(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--config", _config(tmp_path), "--out", str(run)]) == 0
    capsys.readouterr()
    target = tmp_path / "row.csv"
    assert main(["diagnose", str(run / "snap_000005"), "--out", str(target)]) == 0
    rows = target.read_text().splitlines()
    assert rows[0].startswith("t,f_L2k,f_H2k")
    last = read_diagnostics(run / "diagnostics.csv")
    assert float(rows[1].split(",")[1]) == last["f_L2k"][-1]


def test_diagnose_corrupt_snapshot_is_exit_1(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run", "--config", _config(tmp_path), "--out", str(run)]) == 0
    f = run / "snap_000005" / "u.csv"
    f.write_text(f.read_text()[:-5])
    assert main(["diagnose", str(run / "snap_000005")]) == 1
    assert "u.csv" in capsys.readouterr().err


def test_decay_outputs(tmp_path):
    cfg = _config(tmp_path, init="perturbed", init_amplitude=0.1, mu=0.5, init_rho=0.15)
    out = tmp_path / "decay"
    assert main(["decay", "--config", cfg, "--out", str(out), "--t-final", "0.2"]) == 0
    fit = json.loads((out / "decay_fit.json").read_text())
    assert fit["n_used"] == 21 and fit["rate"] > 0
    assert (out / "diagnostics.csv").exists()


def test_check_command(capsys):
    assert main(["check", "--seed", "4", "--count", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nsbgk", "check", "--count", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "bgk_cancellation" in proc.stdout
