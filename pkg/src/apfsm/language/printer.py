"""Canonical text rendering: one statement per line, commands indented by two
spaces, a blank line between statement groups."""
from __future__ import annotations

from .. import expr as ex
from ..model import Model
from .syntax import (
    CommandDecl,
    ConstDecl,
    InitDecl,
    IntervalDecl,
    LabelDecl,
    ModelSource,
    RewardDecl,
    VarDecl,
)


def _update(u):
    return f"{u.variable} {u.op} {ex.to_text(u.amount)}"


def _outcome(o):
    p = ex.format_fraction(o.probability, decimal=False)
    return f"{p}:(" + ", ".join(_update(u) for u in o.updates) + ")"


def format_statement(st) -> str:
    if isinstance(st, ConstDecl):
        return f"const {st.name} = {st.value};"
    if isinstance(st, IntervalDecl):
        return f"const interval {st.name} = [{st.lo}..{st.hi}];"
    if isinstance(st, VarDecl):
        init = f" init {st.init}" if st.init is not None else ""
        return f"var {st.name} : [{st.lo}..{st.hi}]{init};"
    if isinstance(st, InitDecl):
        return f"init {ex.to_text(st.expr)};"
    if isinstance(st, LabelDecl):
        return f"label {st.name} = {ex.to_text(st.expr)};"
    if isinstance(st, RewardDecl):
        act = f" [{st.action}]" if st.action is not None else ""
        return f"reward {st.name}{act} = {ex.to_text(st.expr)};"
    if isinstance(st, CommandDecl):
        outs = " + ".join(_outcome(o) for o in st.outcomes)
        return (f"  [{st.action}] {ex.to_text(st.guard)} weight {ex.to_text(st.weight)}"
                f" -> {outs};")
    raise TypeError(f"unknown statement {st!r}")


def _group(st):
    return "const" if isinstance(st, (ConstDecl, IntervalDecl)) else type(st).__name__


def print_source(source: ModelSource) -> str:
    lines = []
    prev = None
    for st in source.statements:
        g = _group(st)
        if prev is not None and g != prev:
            lines.append("")
        lines.append(format_statement(st))
        prev = g
    return "\n".join(lines) + "\n"


def to_source(model: Model) -> ModelSource:
    """Statements of a validated model in canonical group order."""
    sts = [ConstDecl(n, v) for n, v in model.constants.items()]
    sts += [IntervalDecl(n, lo, hi) for n, (lo, hi) in model.intervals.items()]
    sts += [VarDecl(v.name, v.lo, v.hi, v.init) for v in model.variables]
    if model.init is not None:
        sts.append(InitDecl(model.init))
    sts += [LabelDecl(lab.name, lab.expr) for lab in model.labels]
    sts += [RewardDecl(r.name, r.action, r.expr) for r in model.rewards]
    sts += [CommandDecl(c.action, c.guard, c.weight, c.outcomes) for c in model.commands]
    return ModelSource(tuple(sts))


def print_model(model: Model) -> str:
    return print_source(to_source(model))
