from fractions import Fraction

import numpy as np
import pytest

import oracles
from apfsm.analysis import (RewardStructure, absorption_by_time, check_monotone, deadline_curve, expected_reward,
                            outcome_summary, prob0A, prob0E, prob1A, prob1E, reach)
from apfsm.errors import AnalysisError, ModelError, MonotonicityViolation, NonConvergence, RewardDivergence
from apfsm.language import load_model
from apfsm.statespace import build, classify_terminals, explicit


# state 0: choice a -> goal, choice b -> 50/50 goal/trap
# state 1: only a self-cycle with 2 or an escape to trap
GAME = [
    [{3: 1.0}, {3: 0.5, 4: 0.5}],
    [{2: 1.0}, {4: 1.0}],
    [{1: 0.5, 3: 0.5}],
    [],
    [],
]


def test_qualitative_sets():
    ss = explicit(GAME, {"goal": [3]})
    T = ss.labels["goal"]
    assert np.flatnonzero(prob0E(ss, T)).tolist() == [4]
    assert np.flatnonzero(prob0A(ss, T)).tolist() == [1, 4]
    assert np.flatnonzero(prob1E(ss, T)).tolist() == [0, 1, 2, 3]
    assert np.flatnonzero(prob1A(ss, T)).tolist() == [3]


def test_min_max_on_small_game():
    ss = explicit(GAME, {"goal": [3]})
    hi = reach(ss, "goal", "max").values
    lo = reach(ss, "goal", "min").values
    assert hi[:4] == pytest.approx([1, 1, 1, 1])
    # min: state 1 escapes to the trap, so state 2 gets 1/2 and state 0 picks 1/2
    assert lo == pytest.approx([0.5, 0, 0.5, 1, 0], abs=1e-12)
    assert reach(ss, "goal", "min").value == pytest.approx(0.5)


def test_fixed_needs_a_dtmc():
    ss = explicit(GAME, {"goal": [3]})
    with pytest.raises(ValueError):
        reach(ss, "goal", "fixed")


def test_cyclic_dtmc_matches_dense_solve():
    P = np.array([
        [0.0, 0.6, 0.4, 0.0, 0.0],
        [0.3, 0.0, 0.3, 0.4, 0.0],
        [0.2, 0.2, 0.0, 0.0, 0.6],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])
    ss = explicit([[{j: p for j, p in enumerate(row) if p}] for row in P], {"goal": [3]})
    got = reach(ss, "goal").values
    assert np.abs(got - oracles.dense_reach(P, [3])).max() < 1e-8
    r = np.ones(ss.n_choices)
    want = oracles.dense_reward(P, r, [3, 4])
    assert np.abs(expected_reward(ss, r, "absorbing").values - want).max() < 1e-6


def test_non_convergence_is_reported():
    ss = explicit([[{0: 0.999, 1: 0.0005, 2: 0.0005}], [], []], {"goal": [1]})
    with pytest.raises(NonConvergence) as info:
        reach(ss, "goal", max_iter=5, tol=1e-15)
    assert isinstance(info.value, AnalysisError) and info.value.iterations == 5


def test_empty_target_gives_zero():
    ss = explicit(GAME, {"goal": []})
    assert not reach(ss, "goal", "max").values.any()


def test_unknown_label():
    ss = explicit(GAME, {"goal": [3]})
    with pytest.raises(KeyError):
        reach(ss, "nope", "max")


def test_reward_divergence():
    ss = explicit([[{0: 0.5, 1: 0.5}], [{1: 1.0}, {2: 1.0}], []], {"goal": [2]})
    with pytest.raises(RewardDivergence):
        expected_reward(ss, np.ones(ss.n_choices), "goal", "max")


def test_expected_rewards_match_path_oracle(desk_model):
    ss = build(desk_model)
    oracle = oracles.PathOracle(desk_model)
    s0 = oracle.initial()
    for name in ("steps", "drops", "recharges", "grabs"):
        got = expected_reward(ss, name).value
        assert got == pytest.approx(oracle.reward(s0, name), abs=1e-6), name


def test_reward_restricted_to_action(desk_model):
    ss = build(desk_model)
    r = RewardStructure.from_model(desk_model, "grabs").vector(ss)
    acts = np.array([desk_model.commands[c].action for c in ss.choice_command])
    assert (r[acts != "Grab"] == 0).all() and (r[acts == "Grab"] == 1).all()
    with pytest.raises(KeyError):
        RewardStructure.from_model(desk_model, "nope")


def test_outcome_summary_bounds(desk_interval_model):
    ss = build(desk_interval_model, "interval")
    part = classify_terminals(ss)
    lo = outcome_summary(ss, part, "min")
    hi = outcome_summary(ss, part, "max")
    for k in lo:
        assert lo[k] <= hi[k] + 1e-12


def test_absorption_by_time_matches_oracle(desk_model):
    ss = build(desk_model)
    got = absorption_by_time(ss, "success", "t")
    want = oracles.PathOracle(desk_model).by_time("success")
    assert sorted(got) == sorted(want)
    for t, p in want.items():
        assert got[t] == pytest.approx(float(p), abs=1e-12)


def test_deadline_curve_csv_and_bounds(desk_interval_model):
    ss = build(desk_interval_model, "interval")
    curve = deadline_curve(ss, "success", "t", 0, 60, 10)
    assert curve.deadlines.tolist() == [0, 10, 20, 30, 40, 50, 60]
    lines = curve.to_csv().splitlines()
    assert lines[0] == "T,min,max,uniform" and len(lines) == 8
    assert lines[1] == "0,0,0,0"
    lo, hi = curve.series("min"), curve.series("max")
    assert (lo <= hi + 1e-12).all()


def test_deadline_curve_preconditions():
    m = load_model("var x : [0..3] init 3;\nvar t : [0..3] init 0;\nlabel success = x = 0;\n"
                   "[Down] x > 0 weight 1 -> 1:(x -= 1, t += 1);\n")
    ss = build(m)
    assert deadline_curve(ss, "success", "t", 0, 3, 1).series("uniform").tolist() == [0, 0, 0, 1]
    with pytest.raises(MonotonicityViolation):
        check_monotone(ss, "x")
    with pytest.raises(ValueError):
        deadline_curve(ss, "success", "t", 3, 0, 1)
    m2 = load_model("var x : [0..3] init 3;\nvar t : [0..3] init 0;\nlabel low = x < 2;\n"
                    "[Down] x > 0 weight 1 -> 1:(x -= 1, t += 1);\n")
    with pytest.raises(ModelError):
        deadline_curve(build(m2), "low", "t", 0, 3, 1)


def test_uniform_curve_matches_oracle_exactly(desk_interval_model):
    uni = build(desk_interval_model, "uniform")
    curve = deadline_curve(uni, "success", "t", 0, 130, 1)
    want = oracles.PathOracle(desk_interval_model, corners="uniform").curve("success", range(0, 131))
    assert np.abs(curve.series("uniform") - np.array([float(w) for w in want])).max() < 1e-12


def test_path_oracle_agrees_with_literal_enumeration():
    from apfsm.scenario import desk_params, generate_model

    m = load_model(generate_model(desk_params(width=2, height=1, time_limit=12, capacity=12, b_low=4,
                                              t_ap=(3, 4))))
    paths = oracles.enumerate_paths(m, corners="uniform")
    memo = oracles.PathOracle(m, corners="uniform")
    agg = {}
    for p, cat, t in paths:
        agg[(cat, t)] = agg.get((cat, t), Fraction(0)) + p
    assert agg == memo.dist(memo.initial())
    assert sum(agg.values()) == 1
