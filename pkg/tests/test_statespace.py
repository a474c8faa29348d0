import numpy as np
import pytest

import oracles
from apfsm.errors import CornerRequired, DomainViolation, ModelError, StateBudgetExceeded, UnlabeledTerminal, WeightTie
from apfsm.language import load_model
from apfsm.scenario import desk_params, generate_model
from apfsm.statespace import build, classify_terminals, explicit, state_budget, uniformize

TOY = """\
const LOW = 3;
const interval T_ap = [3..4];
var b : [0..10] init 10;
var t : [0..40] init 0;
label done = b <= LOW;
[Fly] b > LOW weight 1 -> 0.5:(b -= 1, t += T_ap) + 1/2:(b -= 2, t += T_ap.lo);
"""


@pytest.fixture(scope="module")
def toy():
    return load_model(TOY)


def _rows(ss, i):
    return [dict(r) for _, _, r in ss.choices(i)]


@pytest.mark.parametrize("mode", ["interval", "uniform"])
def test_state_ids_follow_fifo_exploration(toy, mode):
    ss = build(toy, mode)
    order = oracles.fifo_exploration(toy)
    assert ss.n_states == len(order)
    assert [tuple(r) for r in ss.states.tolist()] == [s.values for s in order]


def test_fifo_ids_on_desk_scenario(desk_model):
    ss = build(desk_model, "autonomous")
    order = oracles.fifo_exploration(desk_model)
    assert [tuple(r) for r in ss.states.tolist()] == [s.values for s in order]
    for i in (0, 17, ss.n_states - 1):
        assert ss.state_id(order[i]) == i


def test_interval_choices_and_merging(toy):
    ss = build(toy, "interval")
    s0 = ss.choices(0)
    assert [c for _, c, _ in s0] == [0, 1]
    # lo corner: both outcomes differ only in b; hi corner: t differs too
    for _, corner, row in s0:
        assert sum(p for _, p in row) == 1.0
        assert len(row) == 2
    assert ss.stats.choices == ss.n_choices


def test_duplicate_successors_are_merged():
    m = load_model("var x : [0..1] init 0;\n[A] x = 0 weight 1 -> 0.25:(x := 1) + 0.75:(x := 1);\n")
    ss = build(m)
    assert _rows(ss, 0) == [{1: 1.0}]


def test_deadlocks_become_labelled_self_loops(toy):
    ss = build(toy, "interval")
    dead = np.flatnonzero(ss.labels["deadlock"])
    assert len(dead) > 0
    for i in dead:
        assert _rows(ss, i) == [{int(i): 1.0}]
    assert (ss.labels["absorbing"][dead]).all()


def test_rows_are_stochastic(desk_interval_model):
    ss = build(desk_interval_model, "interval")
    sums = np.add.reduceat(ss.probs, ss.row_ptr[:-1])
    assert np.abs(sums - 1).max() < 1e-12
    assert ss.matrix.shape == (ss.n_choices, ss.n_states)


def test_uniform_build_equals_uniformize(desk_interval_model):
    ss = build(desk_interval_model, "interval")
    uni = build(desk_interval_model, "uniform")
    avg = uniformize(ss)
    assert abs(uni.matrix - avg.matrix).max() < 1e-15
    assert uni.is_dtmc and not ss.is_dtmc


def test_autonomous_rejects_free_intervals(toy):
    with pytest.raises(CornerRequired):
        build(toy, "autonomous")


def test_semantic_errors_surface_during_build():
    m = load_model("var x : [0..2] init 0;\n[A] x = 0 weight 0.5 -> 1:(x := 1);\n"
                   "[B] x = 0 weight 0.5 -> 1:(x := 2);\n")
    with pytest.raises(WeightTie):
        build(m)
    m = load_model("var x : [0..2] init 0;\n[A] x < 3 weight 1 -> 1:(x += 1);\n")
    with pytest.raises(DomainViolation):
        build(m)


def test_state_budget(monkeypatch, desk_model):
    with pytest.raises(StateBudgetExceeded):
        build(desk_model, budget=100)
    monkeypatch.setenv("APFSM_STATE_BUDGET", "1234")
    assert state_budget() == 1234


def test_terminal_partition(desk_model):
    ss = build(desk_model)
    part = classify_terminals(ss)
    assert list(part.categories)[:4] == ["success", "emergency", "timeout", "missed"]
    ids = np.concatenate(list(part.categories.values()))
    assert sorted(ids.tolist()) == np.flatnonzero(ss.absorbing).tolist()
    s = int(part.categories["success"][0])
    assert part.category_of(s) == "success"


def test_unlabelled_terminal_is_an_error():
    m = load_model("var x : [0..1] init 0;\nlabel success = x = 1;\n[A] x = 0 weight 1 -> 0.5:(x := 1) + 0.5:();\n"
                   "[B] x = 1 weight 1 -> 1:();\n")
    assert classify_terminals(build(m)).categories["success"].tolist() == [1]
    m = load_model("var x : [0..2] init 0;\nlabel success = x = 1;\n"
                   "[A] x = 0 weight 1 -> 0.5:(x := 1) + 0.5:(x := 2);\n[B] x > 0 weight 1 -> 1:();\n")
    with pytest.raises(UnlabeledTerminal):
        classify_terminals(build(m))


def test_dump_format(toy):
    ss = build(toy, "interval")
    lines = ss.dump().splitlines()
    assert lines[0] == "apfsm-ss v1"
    assert lines[1] == "state 0 b=10,t=0 []"
    rows = [ln for ln in lines if ln.startswith("row 0 ")]
    assert len(rows) == 2


def test_explicit_state_space():
    ss = explicit([[{1: 0.5, 2: 0.5}], [], [{2: 1.0}]], {"goal": [1]})
    assert ss.labels["deadlock"].tolist() == [False, True, False]
    assert ss.absorbing.tolist() == [False, True, True]
    assert ss.valuation(2) == {"state": 2}
    with pytest.raises(ModelError):
        explicit([[{0: 0.5}]])


def test_generated_scenario_is_dtmc_when_intervals_degenerate():
    m = load_model(generate_model(desk_params(width=2, height=2)))
    ss = build(m, "interval")
    assert ss.is_dtmc
