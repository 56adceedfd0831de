import csv
import subprocess
import sys

import numpy as np
import pytest

from lagflow.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from lagflow.config import parse_config
from lagflow.output import read_snapshot

AC_CONFIG = """
model = allen-cahn
nx = 16
eps = 0.3
scheme = bdf2
dt = 1e-3
t_end = 0.01
seed = 3
ic.lo = -0.3
ic.hi = 0.3
snapshot_times = 0.005, 0.01
"""


def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    return list(csv.DictReader(open(path)))


def test_simulate_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", "--config", _write(tmp_path, AC_CONFIG), "--output", str(out)]) == EXIT_OK
    line = capsys.readouterr().out.strip()
    assert line.startswith("simulate allen-cahn bdf2: 10 steps") and "2 snapshots" in line
    assert len(_rows(out / "energy.csv")) == 10
    field, hdr = read_snapshot(out / "phi_0000005.hdr")
    assert hdr.t == pytest.approx(0.005) and field.shape == (16, 16)
    assert (out / "phi_0000010.pgm").read_bytes().startswith(b"P5\n16 16\n255\n")
    assert parse_config((out / "config.txt").read_text()) == parse_config(AC_CONFIG)


def test_config_round_trip_file_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", _write(tmp_path, AC_CONFIG), "--output", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(a / "config.txt"), "--output", str(b)]) == EXIT_OK
    assert (a / "energy.csv").read_bytes() == (b / "energy.csv").read_bytes()


def test_set_overrides_and_sweep(tmp_path):
    out = tmp_path / "sw"
    code = main(["simulate", "--config", _write(tmp_path, AC_CONFIG), "--output", str(out),
                 "--set", "dt=", "--set", "dt_list=2e-3,1e-3", "--set", "snapshot_times="])
    assert code == EXIT_OK
    sweep = _rows(out / "sweep.csv")
    assert [float(r["dt"]) for r in sweep] == [2e-3, 1e-3]
    assert [int(r["steps"]) for r in sweep] == [5, 10]
    assert (out / "energy_dt0.002.csv").exists()


def test_accuracy_command(tmp_path):
    text = ("model = cahn-hilliard\nnx = 16\neps = 0.3\nscheme = bdf2, cn\n"
            "dt_list = 2e-3, 1e-3\nt_end = 0.01\nic = manufactured\n")
    out = tmp_path / "acc"
    assert main(["accuracy", "--config", _write(tmp_path, text), "--output", str(out)]) == EXIT_OK
    for s in ("bdf2", "cn"):
        rows = _rows(out / f"convergence_{s}.csv")
        assert len(rows) == 2 and float(rows[1]["order_phi"]) == pytest.approx(2.0, abs=0.2)


def test_accuracy_needs_manufactured_ic(tmp_path):
    text = AC_CONFIG.replace("dt = 1e-3", "dt_list = 2e-3, 1e-3")
    assert main(["accuracy", "--config", _write(tmp_path, text), "--output", str(tmp_path / "x")]) == EXIT_CONFIG


def test_adaptive_command(tmp_path, capsys):
    text = AC_CONFIG.replace("dt = 1e-3", "adaptive.tol = 1e-3\nadaptive.dt_init = 1e-4")
    out = tmp_path / "ad"
    assert main(["adaptive", "--config", _write(tmp_path, text), "--output", str(out)]) == EXIT_OK
    assert "accepted" in capsys.readouterr().out
    rows = _rows(out / "energy.csv")
    accepted = [r for r in rows if r["accepted"] == "1"]
    assert float(accepted[-1]["t"]) == pytest.approx(0.01)
    assert any(float(r["t"]) == pytest.approx(0.005) for r in accepted)
    assert all(float(r["eta"]) > 0 for r in rows)
    # simulate with an adaptive block delegates to the adaptive driver
    assert main(["simulate", "--config", _write(tmp_path, text), "--output", str(tmp_path / "ad2")]) == EXIT_OK


def test_config_errors_exit_2(tmp_path, capsys):
    bad = _write(tmp_path, AC_CONFIG + "epz = 0.02\n")
    assert main(["simulate", "--config", bad]) == EXIT_CONFIG
    assert "unknown key 'epz'" in capsys.readouterr().err
    conflict = _write(tmp_path, AC_CONFIG + "adaptive.tol = 1e-3\n", "c.cfg")
    assert main(["simulate", "--config", conflict]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["preset", "no-such-preset"]) == EXIT_CONFIG
    assert "ac-table1" in capsys.readouterr().err
    assert main(["simulate", "--config", _write(tmp_path, AC_CONFIG), "--set", "novalue"]) == EXIT_CONFIG


def test_solver_failure_exit_3(tmp_path, capsys):
    # rough data, thin interfaces and a huge step: the multiplier equation has no root
    text = "model = allen-cahn\nnx = 32\neps = 0.02\ndt = 0.5\nt_end = 50\nseed = 3\n"
    assert main(["simulate", "--config", _write(tmp_path, text), "--output", str(tmp_path / "f")]) == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_io_error_exit_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert main(["simulate", "--config", _write(tmp_path, AC_CONFIG), "--output", str(blocker / "sub")]) == EXIT_IO


def test_list_presets(capsys):
    assert main(["list-presets"]) == EXIT_OK
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert "adaptive-demo" in names and len(names) == 13


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lagflow", "list-presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "bcp-third" in res.stdout


@pytest.mark.parametrize("name", ["ac-energy", "ch-energy", "mbe-coarsen", "coupled-stab-sweep"])
def test_presets_run_at_small_size(tmp_path, name):
    sets = ["--set", "nx=16", "--set", "t_end=0.002", "--set", "snapshot_times="]
    if name == "mbe-coarsen":
        sets = ["--set", "nx=16", "--set", "t_end=0.05", "--set", "snapshot_times="]
    if name == "coupled-stab-sweep":
        sets += ["--set", "dt_list=1e-3,5e-4", "--set", "record_every=1"]
    assert main(["preset", name, "--output", str(tmp_path / name)] + sets) == EXIT_OK


def test_accuracy_preset_small(tmp_path):
    out = tmp_path / "t3"
    assert main(["preset", "coupled-table3", "--output", str(out), "--set", "nx=16",
                 "--set", "dt_list=4e-3,2e-3"]) == EXIT_OK
    rows = _rows(out / "convergence_bdf2.csv")
    assert float(rows[1]["order_u"]) == pytest.approx(2.0, abs=0.2)


@pytest.mark.parametrize("name", ["bcp-second", "bcp-first", "bcp-third", "bcp-fourth"])
def test_bcp_presets_complete_with_energy_law_and_mass(tmp_path, name):
    # full resolution, shortened horizon
    out = tmp_path / name
    code = main(["preset", name, "--output", str(out), "--set", "t_end=0.002",
                 "--set", "snapshot_times=0.001,0.002", "--set", "record_every=1"])
    assert code == EXIT_OK
    rows = _rows(out / "energy.csv")
    assert len(rows) == 100
    mod = np.array([float(r["modified_energy"]) for r in rows[1:]])
    assert np.all(np.diff(mod) <= 1e-12 * np.abs(mod[:-1]))
    for key in ("mass_u", "mass_v"):
        m = np.array([float(r[key]) for r in rows])
        assert np.max(np.abs(m - m[0])) <= 1e-12 * abs(m[0])
    for var in ("u", "v"):
        field, hdr = read_snapshot(out / f"{var}_0000100.hdr")
        assert field.shape == (128, 128) and hdr.t == pytest.approx(0.002)
