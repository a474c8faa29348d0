from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apfsm import expr as ex
from apfsm.language import DiagnosticError, load_model, parse_model, print_model, print_source

TOY = """\
// toy mission
const LOW = 3;
const interval T_ap = [3..4];
var b : [0..10] init 10;
var t : [0..40] init 0;
label done = b <= LOW;
reward steps = 1;
reward flights [Fly] = 0.5;
[Fly] b > LOW weight (b > LOW ? 1 : 0) -> 0.5:(b -= 1, t += T_ap) + 1/2:(b -= 2, t += T_ap.lo);
[Rest] b <= LOW weight 0.3 -> 1:();
"""


def codes(text):
    with pytest.raises(DiagnosticError) as info:
        load_model(text)
    return info.value.codes


def test_toy_parses_and_prints_stably():
    model = load_model(TOY)
    assert [v.name for v in model.variables] == ["b", "t"]
    assert [c.action for c in model.commands] == ["Fly", "Rest"]
    text = print_model(model)
    assert print_model(load_model(text)) == text


def test_source_round_trip_ignores_layout():
    src = parse_model(TOY)
    squashed = " ".join(TOY.replace("// toy mission", "").split())
    assert parse_model(squashed) == src
    assert parse_model(print_source(src)) == src


def test_fraction_literals_are_exact():
    m = load_model("var x : [0..1] init 0;\n[A] true weight 1 -> 1/3:(x := 1) + 2/3:();\n")
    assert [o.probability for o in m.commands[0].outcomes] == [Fraction(1, 3), Fraction(2, 3)]


@pytest.mark.parametrize("text,code", [
    ("var x : [0..1] init 0;\n[A] true weight 1 -> 1:(x := 1)", "E-SYNTAX"),
    ("var x : [0..1] init 0;\n[A] true weight 1 -> 1:(x := 1) @;", "E-LEX"),
    ("var x : [0..1] init 0;\nvar x : [0..2] init 0;", "E-DUPLICATE"),
    ("var x : [2..1] init 0;", "E-DOMAIN"),
    ("var x : [0..1] init 5;", "E-DOMAIN"),
    ("var x : [0..1];", "E-NOINIT"),
    ("const interval I = [4..3];\nvar x : [0..1] init 0;", "E-INTERVAL"),
    ("var x : [0..1] init 0;\n[A] true weight 1.5 -> 1:(x := 1);", "E-WEIGHT"),
    ("var x : [0..1] init 0;\n[A] true weight 1 -> 0.5:(x := 1) + 0.4:();", "E-PROBSUM"),
    ("var x : [0..1] init 0;\n[A] true weight 1 -> 1:(y := 1);", "E-UNDECLARED"),
    ("var x : [0..1] init 0;\n[A] true weight 1 -> 1:(x := 1, x := 0);", "E-UPDATE"),
    ("var x : [0..1] init 0;\n[A] x + 1 weight 1 -> 1:(x := 1);", "E-TYPE"),
    ("var x : [0..1] init 0;\nlabel deadlock = x = 1;", "E-RESERVED"),
    ("const interval I = [1..2];\nvar x : [0..9] init 0;\n[A] x < I weight 1 -> 1:(x := 1);",
     "E-INTERVAL-USE"),
    ("", "E-EMPTY"),
])
def test_diagnostics(text, code):
    assert code in codes(text)


def test_diagnostic_carries_location():
    with pytest.raises(DiagnosticError) as info:
        load_model("var x : [0..1] init 0;\n\n[A] true weight 1 -> 1:(y := 1);\n")
    d = info.value.diagnostics[0]
    assert d.line == 3
    assert "y" in d.format("m.apfsm") and d.format("m.apfsm").startswith("m.apfsm:3:")


def test_all_errors_reported_together():
    found = codes("var x : [0..1];\n[A] true weight 2 -> 0.5:(x := 1);\n")
    assert {"E-NOINIT", "E-WEIGHT", "E-PROBSUM"} <= set(found)


# ---------------------------------------------------------------- expressions

NAMES = ("x", "y")


def _exprs():
    leaf = st.one_of(
        st.integers(0, 50).map(ex.num),
        st.sampled_from(NAMES).map(ex.Name),
    )

    def grow(children):
        return st.one_of(
            st.tuples(st.sampled_from(ex.ARITH[:3]), children, children).map(lambda t: ex.Binary(*t)),
            children.map(lambda c: ex.Unary("-", c)),
            st.tuples(st.sampled_from(("min", "max")), children, children).map(
                lambda t: ex.Call(t[0], (t[1], t[2]))),
            children.map(lambda c: ex.Call("abs", (c,))),
        )

    return st.recursive(leaf, grow, max_leaves=12)


def _bools(ints):
    cmp = st.tuples(st.sampled_from(ex.COMPARE), ints, ints).map(lambda t: ex.Binary(*t))
    return st.recursive(
        cmp,
        lambda c: st.one_of(
            st.tuples(st.sampled_from(ex.LOGIC), c, c).map(lambda t: ex.Binary(*t)),
            c.map(lambda e: ex.Unary("!", e)),
            st.tuples(c, c, c).map(lambda t: ex.Ite(*t)),
        ),
        max_leaves=6,
    )


def _guard_text(e):
    return f"var x : [0..9] init 0;\nvar y : [0..9] init 0;\n[A] {ex.to_text(e)} weight 1 -> 1:();\n"


@settings(max_examples=150, deadline=None)
@given(_bools(_exprs()))
def test_expression_text_round_trip(e):
    model = load_model(_guard_text(e))
    assert model.commands[0].guard == e


@settings(max_examples=150, deadline=None)
@given(st.one_of(_exprs(), _bools(_exprs())), st.integers(0, 9), st.integers(0, 9))
def test_scalar_and_vector_compilers_agree(e, x, y):
    env = ex.Env({"x": 0, "y": 1}, {}, {})
    scalar = ex.compile_scalar(e, env)((x, y))
    cols = (np.array([x, 9 - x], dtype=np.int64), np.array([y, 9 - y], dtype=np.int64))
    vector = np.broadcast_to(ex.compile_vector(e, env)(cols), (2,))
    assert float(vector[0]) == float(scalar)
    assert float(vector[1]) == float(ex.compile_scalar(e, env)((9 - x, 9 - y)))


@pytest.mark.parametrize("value,text", [
    (Fraction(1, 4), "0.25"), (Fraction(1, 3), "1/3"), (Fraction(3), "3.0"), (Fraction(1, 1000), "0.001"),
])
def test_format_fraction(value, text):
    assert ex.format_fraction(value) == text
