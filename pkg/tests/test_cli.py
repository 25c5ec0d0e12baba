import csv
import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from passive_lab.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, EXIT_SKIPPED, main

FIXTURES = Path(__file__).parent / "fixtures"


def run_cli(*argv):
    return main([str(a) for a in argv])


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


SMALL_HEAT = {
    "name": "small_heat",
    "model": {"type": "heat2d", "Nx": 4, "Ny": 4, "b": {"profile": "uniform-edge", "edge": "all", "value": 1.0}},
    "nonlinearity": {"kind": "saturation"},
    "initial": {"kind": "smooth", "amplitude": 2.0},
    "T": 1.0,
    "h": 0.05,
    "checks": ["passivity", "replay"],
}


@pytest.mark.parametrize("fixture, code", [
    ("heat_default.json", EXIT_OK),
    ("timoshenko_damped.json", EXIT_OK),
    ("heat_zero_b.json", EXIT_SKIPPED),
    ("negated_phi.json", EXIT_FAIL),
    ("corrupted.json", EXIT_FAIL),
    ("kappa_inflated.json", EXIT_FAIL),
    ("h_zero.json", EXIT_INPUT),
])
def test_fixture_exit_codes(tmp_path, fixture, code):
    assert run_cli("run", "--config", FIXTURES / fixture, "--out", tmp_path, "--quiet") == code


def test_run_writes_outputs(tmp_path):
    assert run_cli("run", "--config", FIXTURES / "heat_default.json", "--out", tmp_path, "--quiet") == EXIT_OK
    for name in ("trajectory.csv", "report.txt", "plot.gp"):
        assert (tmp_path / name).is_file()
    report = (tmp_path / "report.txt").read_text().splitlines()
    checks = [line for line in report if line.startswith("CHECK ")]
    assert [line.split()[1] for line in checks] == ["incremental_sector", "stability_sector", "passivity",
                                                    "replay", "contraction", "stability"]
    assert all(line.split()[2] == "PASS" for line in checks)
    assert report[-1] == "EXIT 0"
    rows = list(csv.reader((tmp_path / "trajectory.csv").open()))
    assert rows[0][:4] == ["t", "norm_x", "energy", "y1"]
    assert len(rows) == 1 + 2001
    norms = [float(r[1]) for r in rows[1:]]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_corrupted_report_locates_step(tmp_path):
    run_cli("run", "--config", FIXTURES / "corrupted.json", "--out", tmp_path, "--quiet")
    line = next(l for l in (tmp_path / "report.txt").read_text().splitlines() if l.startswith("CHECK passivity"))
    assert " FAIL " in line and "step=49" in line


def test_outputs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run_cli("run", "--config", FIXTURES / "negated_phi.json", "--out", tmp_path / d, "--quiet") == EXIT_FAIL
    for name in ("trajectory.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_random_initial_state(tmp_path):
    run_cli("run", "--config", FIXTURES / "negated_phi.json", "--out", tmp_path / "a", "--quiet", "--seed", "1")
    run_cli("run", "--config", FIXTURES / "negated_phi.json", "--out", tmp_path / "b", "--quiet", "--seed", "2")
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != (tmp_path / "b" / "trajectory.csv").read_bytes()


@pytest.mark.parametrize("patch, key", [
    ({"h": 0}, "'h'"),
    ({"T": -1}, "'T'"),
    ({"checks": ["nonsense"]}, "checks"),
    ({"nonlinearity": {"kind": "cubic"}}, "nonlinearity"),
    ({"input": {"kind": "step", "value": 1.0}, "checks": ["contraction"]}, "contraction"),
    ({"model": {"type": "heat2d", "Nx": 2, "Ny": 4}}, "model"),
])
def test_invalid_configs_exit_1(tmp_path, capsys, patch, key):
    cfg = dict(SMALL_HEAT, **patch)
    assert run_cli("run", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o") == EXIT_INPUT
    err = capsys.readouterr().err
    assert "config key" in err and key in err


def test_missing_config_file_exits_1(tmp_path):
    assert run_cli("run", "--config", tmp_path / "nope.json") == EXIT_INPUT


def test_h_zero_message(tmp_path, capsys):
    run_cli("run", "--config", FIXTURES / "h_zero.json", "--out", tmp_path)
    assert "config key 'h': must be positive, got 0" in capsys.readouterr().err


def test_sweep_summary(tmp_path, monkeypatch):
    monkeypatch.setenv("PASSIVE_LAB_THREADS", "2")
    cfg = write_config(tmp_path, dict(SMALL_HEAT, T=0.5))
    code = run_cli("sweep", "--config", cfg, "--out", tmp_path / "s", "--quiet",
                   "--param", "h", "--values", "0.01,0.005,0.0025")
    assert code == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "s" / "summary.csv").open()))
    assert [float(r["h"]) for r in rows] == [0.01, 0.005, 0.0025]
    assert all(r["exit"] == "0" for r in rows)
    assert math.isnan(float(rows[0]["diff_prev"])) and float(rows[2]["diff_prev"]) < float(rows[1]["diff_prev"])
    assert 0.8 < float(rows[2]["order"]) < 1.2
    assert len(list((tmp_path / "s").glob("00*_h=*"))) == 3


def test_sweep_empty_values_exit_1(tmp_path):
    cfg = write_config(tmp_path, SMALL_HEAT)
    assert run_cli("sweep", "--config", cfg, "--out", tmp_path / "s", "--param", "h", "--values", "") == EXIT_INPUT


def test_sweep_propagates_failures(tmp_path):
    cfg = write_config(tmp_path, dict(SMALL_HEAT, nonlinearity={"kind": "negated", "of": {"kind": "saturation"}},
                                      checks=["sector"]))
    code = run_cli("sweep", "--config", cfg, "--out", tmp_path / "s", "--quiet", "--param", "h", "--values", "0.1")
    assert code == EXIT_FAIL


def test_audit_verb(tmp_path):
    assert run_cli("audit", "--config", FIXTURES / "timoshenko_damped.json", "--out", tmp_path, "--quiet") == EXIT_OK
    lines = (tmp_path / "audit.txt").read_text().splitlines()
    audit = [l for l in lines if l.startswith("AUDIT")]
    assert [l.split()[1] for l in audit] == ["part_a", "part_b", "part_c"]
    assert all(l.split()[2] == "PASS" for l in audit)
    assert run_cli("audit", "--config", FIXTURES / "heat_default.json", "--out", tmp_path) == EXIT_INPUT


def test_spectrum_verb(tmp_path):
    assert run_cli("spectrum", "--config", FIXTURES / "heat_default.json", "--out", tmp_path / "a", "--quiet") == 0
    text = (tmp_path / "a" / "spectrum.txt").read_text()
    assert "AK_zero_in_spectrum=False" in text
    abscissa = float(text.split("AK_abscissa=")[1].split()[0])
    assert abscissa == pytest.approx(-0.7742, abs=1e-4)
    run_cli("spectrum", "--config", FIXTURES / "heat_zero_b.json", "--out", tmp_path / "b", "--quiet")
    assert "AK_zero_in_spectrum=True" in (tmp_path / "b" / "spectrum.txt").read_text()


def test_custom_node_from_file(tmp_path):
    (tmp_path / "A.csv").write_text("-1,0\n0,-2\n")
    cfg = dict(SMALL_HEAT, model={"type": "custom", "A": "A.csv", "B": [[1], [0]], "C": [[1, 0]], "D": [[0]]},
               initial={"kind": "constant", "value": 1.0})
    assert run_cli("run", "--config", write_config(tmp_path, cfg), "--out", tmp_path / "o", "--quiet") == EXIT_OK


@pytest.mark.skipif(shutil.which("passive-lab") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["passive-lab", "run", "--config", str(FIXTURES / "corrupted.json"), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == EXIT_FAIL and "CHECK passivity FAIL" in res.stdout
    res = subprocess.run([sys.executable, "-m", "passive_lab", "spectrum", "--config",
                          str(FIXTURES / "heat_default.json"), "--out", str(tmp_path), "--quiet"])
    assert res.returncode == EXIT_OK
