import json
import os

import numpy as np
import pytest

from perifsi.cli import (EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_SELF_INTERSECTION, main, run_config,
                         run_sweep)
from perifsi.config import RunConfig, parse_config
from perifsi.errors import ConfigError

SMALL = """# small desk config
n_shell = 4
n_interior = 6
grid = 32
n_steps = 40
anderson_depth = 3
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_defaults_documented_and_valid():
    cfg = RunConfig()
    assert cfg.n_shell == 8 and cfg.n_interior == 16 and cfg.dt == 1.0 / 400 and cfg.grid == 64


def test_parse_values_comments_and_lists():
    cfg = parse_config("period = 2.0  # seconds\ndt = 0.01\nepsilons = 0.1, 0.05\nfluid_modes = 1:0:1; 2:0.5:0\n"
                       "membrane = yes\nc0_gate = none\n")
    assert cfg.n_steps == 200 and cfg.epsilons == (0.1, 0.05)
    assert cfg.fluid_modes == ((1, 0.0, 1.0), (2, 0.5, 0.0))
    assert cfg.membrane and cfg.c0_gate is None


@pytest.mark.parametrize("text, line", [
    ("n_shell = 4\nbogus = 1\n", 2),
    ("n_shell = four\n", 1),
    ("\n\njust words\n", 3),
    ("dt = 0.3\n", 1),
    ("kappa = 1.5\n", 1),
    ("alpha = 1\n", 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line and f"line {line}" in str(err.value)


def test_epsilon_schedule_must_decrease():
    with pytest.raises(ConfigError):
        parse_config("epsilons = 0.05, 0.1\n")


def test_config_digest_is_stable():
    assert parse_config(SMALL).digest() == parse_config(SMALL).digest()
    assert parse_config(SMALL).digest() != parse_config(SMALL + "amplitude = 1e-3\n").digest()


def test_config_text_roundtrip():
    cfg = parse_config(SMALL + "epsilons = 0.1, 0.05\nfluid_modes = 1:0:1; 3:0.25:0\n")
    assert parse_config(cfg.to_text()) == cfg


def test_bad_config_exits_2(tmp_path, capsys):
    path = write(tmp_path, "n_shell = 0\n")
    assert main(["run", path]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_empty_forcing_run_writes_zero_trajectory(tmp_path):
    out = tmp_path / "zero"
    path = write(tmp_path, SMALL + f"output_dir = {out}\n")
    assert main(["run", path]) == EXIT_OK
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    assert data.shape == (41, 1 + 2 * 4)
    assert np.max(np.abs(data[:, 1:])) == 0.0
    header = (out / "trajectory.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["t", "b1"] and header[-1] == "bdot4"
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok" and all(v["passed"] for v in report["invariants"].values())


def test_rerun_is_byte_identical(tmp_path):
    text = SMALL + "amplitude = 1e-2\n"
    cfg = parse_config(text)
    run_config(cfg, str(tmp_path / "a"))
    run_config(cfg, str(tmp_path / "b"))
    for name in ("ledger.csv", "trajectory.csv", "coefficients.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ledger_reproducible_from_persisted_trajectory(tmp_path):
    cfg = parse_config(SMALL + "amplitude = 1e-2\nmode = decoupled\n")
    code, report = run_config(cfg, str(tmp_path))
    assert code == EXIT_OK
    led = np.genfromtxt(tmp_path / "ledger.csv", delimiter=",", skip_header=1)
    # energy differences plus dissipation minus work reproduce the residual column
    recon = np.diff(led[:, 1]) + led[:-1, 2] - led[:-1, 3]
    assert np.allclose(recon, led[:-1, 4], atol=1e-18)
    assert abs(np.nansum(led[:, 4]) + led[0, 1] - led[-1, 1]) <= report["results"]["energy_balance"] + 1e-20
    traj = np.loadtxt(tmp_path / "trajectory.csv", delimiter=",", skiprows=1)
    coef = np.loadtxt(tmp_path / "coefficients.csv", delimiter=",", skiprows=1)
    per = max(np.max(np.abs(traj[-1, 1:5] - traj[0, 1:5])), np.max(np.abs(coef[-1, 1:] - coef[0, 1:])))
    assert per == report["results"]["periodicity_state"]


def test_env_var_overrides_config_path(tmp_path, monkeypatch):
    out = tmp_path / "env"
    good = write(tmp_path, SMALL + f"output_dir = {out}\n", "good.cfg")
    bad = write(tmp_path, "nonsense\n", "bad.cfg")
    monkeypatch.setenv("PERIFSI_CONFIG", good)
    assert main(["run", bad]) == EXIT_OK
    assert (out / "report.json").exists()


def test_nonconvergence_exit_code(tmp_path):
    cfg = parse_config(SMALL + "amplitude = 1e-2\nmax_outer = 1\nouter_tol = 1e-15\n")
    code, report = run_config(cfg, str(tmp_path))
    assert code == EXIT_NONCONVERGENCE and report["error"] == "NonconvergenceError"
    assert len(report["outer_history"]) == 1
    assert json.loads((tmp_path / "report.json").read_text())["exit_code"] == EXIT_NONCONVERGENCE


def test_sweep_reports_partial_failure(tmp_path):
    cfg = parse_config(SMALL + "kappa = 0.3\n")
    code, rows = run_sweep(cfg, "amplitude", [0.0, 1e-2, 200.0], str(tmp_path))
    assert code == EXIT_SELF_INTERSECTION
    assert [r["exit_code"] for r in rows] == [EXIT_OK, EXIT_OK, EXIT_SELF_INTERSECTION]
    rep = json.loads((tmp_path / "sweep_report.json").read_text())
    assert [f["value"] for f in rep["failed"]] == [200.0]
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("amplitude,exit_code,status,sup_energy") and len(lines) == 4
    assert all(os.path.isdir(tmp_path / f"amplitude_{i:03d}") for i in range(3))


def test_sweep_dt_grid_must_divide_period(tmp_path, capsys):
    path = write(tmp_path, SMALL)
    assert main(["sweep", path, "--param", "dt", "--grid", "0.3"]) == EXIT_CONFIG


def test_check_command(capsys):
    assert main(["check", "korn"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("PASS korn")
