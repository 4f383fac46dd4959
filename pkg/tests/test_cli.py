import json
import shutil
import subprocess
import sys

import pytest

from wavedrift.cli import main

BASE = {
    "field": {"kind": "spectral", "n_modes": 32},
    "deltas": [0.1],
    "T_macro": 0.5,
    "output_step_macro": 0.05,
    "n_traj": 64,
    "chunk_size": 16,
    "seed": 4,
    "energy_tolerance": 1e-2,
    "statistics": {"ks_lag_macro": 0.1},
}


def _write(tmp_path, **over):
    raw = dict(BASE, **over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return str(p)


def test_coeffs_ok(tmp_path, capsys):
    cfg = _write(tmp_path)
    assert main(["coeffs", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    d = json.loads((tmp_path / "o" / "coeffs.json").read_text())
    assert abs(d["a"] - 1.2533141) < 1e-6
    assert "divergence_residual" in capsys.readouterr().out


def test_run_ok(tmp_path):
    cfg = _write(tmp_path)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
    assert (tmp_path / "o" / "summary_delta_0.1.json").exists()
    assert json.loads((tmp_path / "o" / "config.json").read_text())["seed"] == 7


def test_preset_config(tmp_path):
    assert main(["coeffs", "--config", "preset:quick", "--out", str(tmp_path)]) == 0


@pytest.mark.parametrize("args", [
    ["run", "--config", "/nonexistent.json"],
    ["run", "--config", "preset:nope"],
    ["coeffs", "--config", "preset:quick", "--workers", "0"],
])
def test_config_errors_exit_2(tmp_path, args, capsys):
    assert main(args + ["--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_schema_error_exit_2(tmp_path):
    cfg = _write(tmp_path, n_traj="many")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_constraint_error_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, cutoff={"n_traj": 1})
    rc = main(["cutoff-run", "--config", cfg, "--out", str(tmp_path / "o"),
               "--eps", "0.3,0.16,0.25,0.4,0.2,0.2,0.25,0.2"])
    assert rc == 2
    assert "eps4 in (1/2, 1)" in capsys.readouterr().err


def test_audit_failure_exit_3(tmp_path, capsys):
    cfg = _write(tmp_path, energy_tolerance=1e-12,
                 dt_policy={"kind": "fixed", "dt_micro": 0.015})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    cfg = _write(tmp_path, energy_tolerance=1e-12, deltas=[0.1, 0.05],
                 dt_policy={"kind": "fixed", "dt_micro": 0.015})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--check"]) == 3
    assert "energy audit failed" in capsys.readouterr().err


def test_sweep_single_delta_exit_2(tmp_path):
    assert main(["sweep", "--config", _write(tmp_path), "--out", str(tmp_path / "o")]) == 2


def test_sweep_check_exit_codes(tmp_path, capsys):
    ok = _write(tmp_path, deltas=[0.2, 0.1],
                statistics={"ks_lag_macro": 0.1, "rel_tol": 10.0, "ks_alpha": 1e-300})
    rc = main(["sweep", "--config", ok, "--out", str(tmp_path / "a"), "--check"])
    out = capsys.readouterr().out
    assert "PASS fit_smallest_delta" in out
    strict = _write(tmp_path, deltas=[0.2, 0.1],
                    statistics={"ks_lag_macro": 0.1, "rel_tol": 1e-6})
    assert main(["sweep", "--config", strict, "--out", str(tmp_path / "b"), "--check"]) == 4
    assert "FAIL fit_smallest_delta" in capsys.readouterr().out
    assert rc in (0, 4)


def test_cutoff_run(tmp_path, capsys):
    cfg = _write(tmp_path, cutoff={"n_traj": 2, "T_macro": 0.5})
    rep = tmp_path / "stop.json"
    assert main(["cutoff-run", "--config", cfg, "--out", str(tmp_path / "o"),
                 "--report", str(rep)]) == 0
    assert "witnesses_verified: True" in capsys.readouterr().out
    assert len(json.loads(rep.read_text())) == 2


@pytest.mark.skipif(shutil.which("wavedrift") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = _write(tmp_path)
    r = subprocess.run(["wavedrift", "coeffs", "--config", cfg, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0
    r = subprocess.run([sys.executable, "-m", "wavedrift.cli", "run", "--config",
                        str(tmp_path / "missing.json")], capture_output=True, text=True)
    assert r.returncode == 2
