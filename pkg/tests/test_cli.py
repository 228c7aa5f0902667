import json
import subprocess
import sys

import pytest

from flexqueue.cli import run

SMALL = """\
market:
  lam: [1.3, 0.9]
  mu: [0.8, 1.1]
  theta: 0.7
solver:
  cap: 6
"""


@pytest.fixture
def small_config(tmp_path):
    f = tmp_path / "small.yaml"
    f.write_text(SMALL)
    return f


def test_throughput_prints_json(capsys, small_config, monkeypatch):
    monkeypatch.delenv("FLEXQ_SEED", raising=False)
    assert run(["throughput", "--config", str(small_config)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["policy"] == "acr" and rec["tp_exact"] > 0 and rec["n_states"] == 49


def test_waits_with_simulation_writes_files(tmp_path, small_config):
    out = tmp_path / "o"
    code = run(["waits", "--config", str(small_config), "--reps", "200", "--seed", "5",
                "--out", str(out)])
    assert code == 0
    text = (out / "waits.csv").read_text().splitlines()
    assert text[0] == "agent_type,queue,wait_exact,wait_sim,wait_sim_se"
    man = json.loads((out / "waits.csv.manifest.json").read_text())
    assert man["manifest"]["command"] == ["waits"] and man["seed"] == 5


@pytest.mark.parametrize("command", [["waits", "--reps", "100"], ["equilibrium"],
                                     ["couple", "--reps", "300"]])
def test_identical_runs_are_byte_identical(tmp_path, small_config, command):
    name = command[0]
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(command + ["--config", str(small_config), "--out", str(d)]) == 0
    assert (a / f"{name}.csv").read_bytes() == (b / f"{name}.csv").read_bytes()


def test_replay_reproduces_output(tmp_path, small_config):
    first = tmp_path / "first"
    assert run(["waits", "--config", str(small_config), "--reps", "100", "--out",
                str(first)]) == 0
    again = tmp_path / "again"
    assert run(["replay", str(first / "waits.csv.manifest.json"), "--out", str(again)]) == 0
    assert (first / "waits.csv").read_bytes() == (again / "waits.csv").read_bytes()


def test_sweep_fig6_small_grid_and_json(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("market:\n  lam: [15, 60]\nsweep:\n  grid: [5.0]\n")
    assert run(["sweep", "fig6", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "fig6.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("lam0,fb")
    assert run(["sweep", "fig6", "--config", str(cfg), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["lam0"] == 5.0


def test_equilibrium_two_flexible_types(capsys, tmp_path):
    cfg = tmp_path / "e.yaml"
    cfg.write_text("market:\n  ell: 2\n  lam: [1.0, 0.7, 0.5]\n  mu: [0.6, 0.9, 0.8]\n"
                   "  theta: 0.5\nsolver:\n  cap: 3\n  max_iter: 2000\n"
                   "couple:\n  base: [0, 0, 0]\n")
    assert run(["equilibrium", "--config", str(cfg), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["converged"] and rows[0]["residual"] <= 1e-6


@pytest.mark.parametrize("argv", [
    ["throughput", "--config", "/nonexistent.yaml"],
    ["throughput", "--cap", "0"],
    ["sweep", "thm2", "--seed", "-1"],
])
def test_config_errors_exit_2(argv, capsys):
    assert run(argv) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config"


def test_unknown_key_exit_2(tmp_path, capsys):
    f = tmp_path / "bad.yaml"
    f.write_text("market:\n  lamda: [1, 2]\n")
    assert run(["waits", "--config", str(f)]) == 2
    assert "lamda" in capsys.readouterr().err


def test_replay_rejects_non_manifest(tmp_path, small_config):
    assert run(["replay", str(small_config)]) == 2


def test_module_entry_point(small_config):
    proc = subprocess.run([sys.executable, "-m", "flexqueue", "throughput", "--config",
                           str(small_config)], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["tp_exact"] > 0
