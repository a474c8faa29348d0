import json

import pytest

from apfsm.analysis import expected_reward, outcome_summary
from apfsm.errors import StateBudgetExceeded
from apfsm.language import load_model
from apfsm.microsim import MicroParams, calibrate
from apfsm.scenario import ScenarioParams, desk_params, generate_model, last_cell, search_pattern
from apfsm.statespace import build, classify_terminals


def outcomes(**kw):
    ss = build(load_model(generate_model(desk_params(**kw))), "autonomous")
    return ss, outcome_summary(ss, classify_terminals(ss))


@pytest.mark.parametrize("w,h", [(1, 1), (3, 2), (4, 4), (5, 3)])
def test_search_pattern_visits_every_cell_once(w, h):
    p = desk_params(width=w, height=h)
    pos, seen = (0, 0), [(0, 0)]
    while pos != last_cell(p):
        nxt = search_pattern(p, pos)
        assert abs(nxt[0] - pos[0]) + abs(nxt[1] - pos[1]) == 1
        pos = nxt
        seen.append(pos)
    assert sorted(seen) == sorted((x, y) for x in range(w) for y in range(h))
    assert search_pattern(p, last_cell(p)) == (0, 0)


def test_parameter_validation():
    with pytest.raises(ValueError):
        desk_params(b_low=60)
    with pytest.raises(ValueError):
        desk_params(deposit=(4, 0))
    with pytest.raises(ValueError):
        desk_params(t_ap=(0, 2))
    with pytest.raises(ValueError):
        desk_params(alpha=1.5)
    with pytest.raises((TypeError, ValueError)):
        ScenarioParams.from_dict({"widht": 3})


def test_budget_guard():
    with pytest.raises(StateBudgetExceeded):
        generate_model(desk_params(), budget=1000)


def test_perfect_mission_always_succeeds():
    _, res = outcomes(alpha=1, p_drop=0, p_emergency=0)
    assert res["success"] == pytest.approx(1.0, abs=1e-12)


def test_blind_sensor_misses_everything():
    _, res = outcomes(alpha=0, p_emergency=0)
    assert res["missed"] == pytest.approx(1.0, abs=1e-12)
    assert res["success"] == 0


def test_no_emergencies_without_hazard():
    _, res = outcomes(p_emergency=0)
    assert res["emergency"] == 0
    assert sum(res.values()) == pytest.approx(1.0, abs=1e-12)


def test_tight_time_limit_causes_timeouts():
    _, res = outcomes(time_limit=12, alpha=0.1)
    assert res["timeout"] > 0


def test_small_battery_forces_recharging():
    ss, res = outcomes(capacity=14, b_low=8, alpha=0.1, p_emergency=0)
    assert expected_reward(ss, "recharges").value > 0
    assert sum(res.values()) == pytest.approx(1.0, abs=1e-12)


def test_multiple_objects():
    _, res = outcomes(width=3, height=3, objects=2, alpha=0.5)
    assert 0 < res["success"] < 1
    assert sum(res.values()) == pytest.approx(1.0, abs=1e-12)


def test_calibrated_parameters():
    stats = calibrate(MicroParams(trials=100, seed=3)).to_dict()
    p = desk_params().with_stats(stats)
    assert p.t_ap == (stats["approach"]["time"]["lo"], stats["approach"]["time"]["hi"])
    assert p.t_cell[0] >= 1
    assert float(p.prob("alpha")) == pytest.approx(stats["search"]["prob"]["detect"], abs=1e-6)
    model = load_model(generate_model(p))
    assert model.intervals["T_ap"] == p.t_ap


def test_parameters_json_round_trip(tmp_path):
    p = desk_params(width=3, t_ap=(3, 5), alpha=0.3)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_dict()))
    assert ScenarioParams.load(path) == p
