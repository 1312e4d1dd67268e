import csv
import json
from pathlib import Path

from dualrisk.cli import main
from dualrisk.pipeline import load_scenario, scenario_hash, with_overrides

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path)])


def test_roots_on_busy_period(tmp_path):
    assert run(tmp_path, "roots", "--scenario", str(SCENARIOS / "busy_period.toml")) == 0
    out = json.loads((tmp_path / "roots.json").read_text())
    assert len(out["roots"]) == 2
    assert out["scenario_hash"] == scenario_hash(load_scenario(SCENARIOS / "busy_period.toml"))


def test_solve_stamps_hash_and_seed(tmp_path):
    path = SCENARIOS / "two_sided.json"
    assert run(tmp_path, "solve", "--scenario", str(path)) == 0
    out = json.loads((tmp_path / "solve.json").read_text())
    assert out["scenario_hash"] == scenario_hash(load_scenario(path))
    assert out["seed"] == 3
    assert out["fe_residual_max"] < 1e-6


def test_invert_writes_csv(tmp_path):
    path = SCENARIOS / "fgm_calibration.toml"
    assert run(tmp_path, "invert", "--scenario", str(path), "--terms", "30") == 0
    lines = (tmp_path / "invert.csv").read_text().splitlines()
    sc = with_overrides(load_scenario(path), terms=30)
    assert lines[0] == f"# scenario_hash={scenario_hash(sc)}"
    rows = list(csv.DictReader(l for l in lines if not l.startswith("#")))
    assert [float(r["x"]) for r in rows] == [0.5, 1.0, 2.0, 4.0]
    values = [float(r["value"]) for r in rows]
    assert all(0 <= v <= 1 for v in values) and values == sorted(values, reverse=True)


def test_simulate_respects_overrides(tmp_path):
    path = SCENARIOS / "fgm_calibration.toml"
    assert run(tmp_path, "simulate", "--scenario", str(path), "--mc-n", "2000", "--seed", "9") == 0
    out = json.loads((tmp_path / "simulate.json").read_text())
    assert out["seed"] == 9 and all(e["n"] == 2000 for e in out["estimates"])


def test_compare_passes_on_calibration(tmp_path):
    assert run(tmp_path, "compare", "--scenario", str(SCENARIOS / "fgm_calibration.toml")) == 0
    out = json.loads((tmp_path / "compare.json").read_text())
    assert out["verdict"] == "PASS"


def test_bad_input_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('[model]\ntype = "nope"\n')
    assert run(tmp_path, "solve", "--scenario", str(bad)) == 2
    assert run(tmp_path, "solve") == 2


def test_unsupported_exit_code(tmp_path):
    assert run(tmp_path, "solve", "--scenario", str(SCENARIOS / "uniform_guard.toml")) == 3
    assert run(tmp_path, "roots", "--scenario", str(SCENARIOS / "fgm_calibration.toml")) == 3


def test_numerical_failure_exit_code(tmp_path):
    text = (SCENARIOS / "fgm_calibration.toml").read_text().replace("depth_tol = 1e-12", "depth_tol = 1e-12\nmax_nodes = 1")
    path = tmp_path / "tiny.toml"
    path.write_text(text)
    assert run(tmp_path, "solve", "--scenario", str(path)) == 4


def test_selfcheck_single_criterion(tmp_path, capsys):
    assert run(tmp_path, "selfcheck", "--criteria", "6") == 0
    assert "PASS" in capsys.readouterr().out
    out = json.loads((tmp_path / "selfcheck.json").read_text())
    assert out["passed"] and len(out["criteria"]) == 1
