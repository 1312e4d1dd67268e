import json
from pathlib import Path

import pytest

from dualrisk.errors import ParseError
from dualrisk.models import FgmProportional, RuinTimeLst
from dualrisk.pipeline import (
    canonical_json,
    load_scenario,
    parse_scenario,
    scenario_hash,
    scenario_to_dict,
    with_overrides,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.mark.parametrize("name", ["fgm_calibration.toml", "busy_period.toml", "two_sided.json"])
def test_canonical_round_trip(name, tmp_path):
    sc = load_scenario(SCENARIOS / name)
    path = tmp_path / "again.json"
    path.write_text(canonical_json(sc))
    again = load_scenario(path)
    assert again == sc
    assert canonical_json(again) == canonical_json(sc)
    assert scenario_hash(again) == scenario_hash(sc)


def test_hash_changes_with_content():
    sc = load_scenario(SCENARIOS / "fgm_calibration.toml")
    assert scenario_hash(with_overrides(sc, seed=8)) != scenario_hash(sc)
    assert len(scenario_hash(sc)) == 64


def test_toml_fields_parsed():
    sc = load_scenario(SCENARIOS / "fgm_calibration.toml")
    assert isinstance(sc.model, FgmProportional)
    assert sc.x_grid == (0.5, 1.0, 2.0, 4.0)
    assert sc.inversion.terms == 40 and sc.mc.n == 200_000 and sc.mc.seed == 7
    busy = load_scenario(SCENARIOS / "busy_period.toml")
    assert busy.functional == RuinTimeLst(0.5)


def test_overrides():
    sc = load_scenario(SCENARIOS / "fgm_calibration.toml")
    new = with_overrides(sc, seed=3, mc_n=5000, depth_tol=1e-10, terms=30)
    assert (new.mc.seed, new.mc.n, new.solver.depth_tol, new.inversion.terms) == (3, 5000, 1e-10, 30)
    assert with_overrides(sc) == sc


def base():
    return json.loads(canonical_json(load_scenario(SCENARIOS / "fgm_calibration.toml")))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("model"),
        lambda d: d.update(extra=1),
        lambda d: d.update(x_grid=[1.0, 0.5]),
        lambda d: d.update(x_grid=[-1.0]),
        lambda d: d["mc"].update(n=10),
        lambda d: d["solver"].update(bogus=1),
        lambda d: d.update(functional={"type": "nope"}),
        lambda d: d["model"].update(type="nope"),
        lambda d: d["model"].update(a=-2.0),
    ],
)
def test_bad_scenarios_rejected(mutate):
    d = base()
    mutate(d)
    with pytest.raises(ParseError):
        parse_scenario(d)


def test_complex_alpha_round_trip():
    d = base()
    d["functional"] = {"type": "ruin_time_lst", "alpha": [0.5, 1.0]}
    sc = parse_scenario(d)
    assert sc.functional == RuinTimeLst(0.5 + 1j)
    assert parse_scenario(scenario_to_dict(sc)) == sc


def test_unreadable_file(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("x_grid = [")
    with pytest.raises(ParseError):
        load_scenario(bad)
