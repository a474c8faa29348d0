"""Expression trees for guards, weights, updates, labels and rewards.

Expressions are immutable dataclasses; source locations are carried along but
excluded from equality so that re-parsed text compares equal to the original.
Each tree can be rendered back to canonical text, type-checked against a name
environment, and compiled to Python callables in two flavours: *scalar*
(one valuation as a tuple) and *vector* (one numpy column per variable).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

Loc = tuple  # (line, column), 1-based

FUNCTIONS = {"min": (2, None), "max": (2, None), "abs": (1, 1), "mod": (2, 2)}

ARITH = ("+", "-", "*", "/")
COMPARE = ("=", "!=", "<", "<=", ">", ">=")
LOGIC = ("&", "|")

# binding strength used by the printer and mirrored by the parser
PREC_ITE, PREC_OR, PREC_AND, PREC_NOT, PREC_CMP, PREC_ADD, PREC_MUL, PREC_NEG, PREC_ATOM = range(1, 10)
_BINARY_PREC = {"|": PREC_OR, "&": PREC_AND, "+": PREC_ADD, "-": PREC_ADD, "*": PREC_MUL, "/": PREC_MUL}
_BINARY_PREC.update({op: PREC_CMP for op in COMPARE})


class Expr:
    """Marker base class."""

    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Num(Expr):
    value: Fraction
    decimal: bool = False
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Name(Expr):
    id: str
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Endpoint(Expr):
    """``NAME.lo`` / ``NAME.hi`` of an interval constant."""

    name: str
    end: str
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # '-' or '!'
    operand: Expr
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple
    loc: Loc = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    other: Expr
    loc: Loc = field(default=None, compare=False, repr=False)


def num(value) -> Num:
    """Literal helper for programmatic construction (non-negative only)."""
    if isinstance(value, bool):
        raise TypeError("use BoolLit for booleans")
    if isinstance(value, int):
        return Num(Fraction(value))
    return Num(Fraction(str(value)), decimal=True)


# --------------------------------------------------------------------------
# printing

def format_fraction(value: Fraction, decimal: bool = True) -> str:
    """Exact decimal text for terminating fractions, ``n/d`` otherwise."""
    value = Fraction(value)
    if value.denominator == 1 and not decimal:
        return str(value.numerator)
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives, 1)
    scaled = value * 10**digits
    assert scaled.denominator == 1
    sign = "-" if scaled < 0 else ""
    s = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    head, tail = s[:-digits], s[-digits:].rstrip("0") or "0"
    return f"{sign}{head}.{tail}"


def precedence(e: Expr) -> int:
    if isinstance(e, Ite):
        return PREC_ITE
    if isinstance(e, Binary):
        return _BINARY_PREC[e.op]
    if isinstance(e, Unary):
        return PREC_NOT if e.op == "!" else PREC_NEG
    return PREC_ATOM


def to_text(e: Expr) -> str:
    if isinstance(e, Num):
        return format_fraction(e.value, e.decimal)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Endpoint):
        return f"{e.name}.{e.end}"
    if isinstance(e, Call):
        return f"{e.func}(" + ", ".join(to_text(a) for a in e.args) + ")"
    if isinstance(e, Unary):
        inner = to_text(e.operand)
        limit = PREC_NOT if e.op == "!" else PREC_NEG
        if precedence(e.operand) < limit:
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        p = _BINARY_PREC[e.op]
        left, right = to_text(e.left), to_text(e.right)
        lp, rp = precedence(e.left), precedence(e.right)
        if lp < p or (p == PREC_CMP and lp == p):
            left = f"({left})"
        if rp <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Ite):
        cond, then, other = to_text(e.cond), to_text(e.then), to_text(e.other)
        if precedence(e.cond) <= PREC_ITE:
            cond = f"({cond})"
        if precedence(e.then) <= PREC_ITE:
            then = f"({then})"
        return f"{cond} ? {then} : {other}"
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# traversal

def children(e: Expr):
    if isinstance(e, Unary):
        return (e.operand,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Call):
        return e.args
    if isinstance(e, Ite):
        return (e.cond, e.then, e.other)
    return ()


def walk(e: Expr):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def names(e: Expr) -> list:
    """Bare names in first-occurrence order."""
    seen = []
    for node in walk(e):
        if isinstance(node, Name) and node.id not in seen:
            seen.append(node.id)
    return seen


# --------------------------------------------------------------------------
# typing

BOOL, INT, REAL = "bool", "int", "real"


class ExprTypeError(Exception):
    def __init__(self, message, loc=None, code="E-TYPE"):
        super().__init__(message)
        self.loc = loc
        self.code = code


def infer_type(e: Expr, kinds: Mapping[str, str], *, allow_interval: bool = False) -> str:
    """Return BOOL/INT/REAL or raise ExprTypeError.

    ``kinds`` maps each declared name to ``var``, ``const`` or ``interval``.
    Bare interval names are only legal where ``allow_interval`` is set
    (update right-hand sides); endpoints are legal everywhere.
    """

    def numeric(t):
        return INT if t == BOOL else t

    def go(node):
        if isinstance(node, Num):
            return REAL if node.decimal or node.value.denominator != 1 else INT
        if isinstance(node, BoolLit):
            return BOOL
        if isinstance(node, Name):
            kind = kinds.get(node.id)
            if kind is None:
                raise ExprTypeError(f"undeclared name {node.id!r}", node.loc, "E-UNDECLARED")
            if kind == "interval" and not allow_interval:
                raise ExprTypeError(
                    f"interval constant {node.id!r} may only appear bare in update "
                    f"expressions; use {node.id}.lo or {node.id}.hi",
                    node.loc,
                    "E-INTERVAL-USE",
                )
            if kind not in ("var", "const", "interval"):
                raise ExprTypeError(f"{node.id!r} is a {kind}, not a value", node.loc)
            return INT
        if isinstance(node, Endpoint):
            if kinds.get(node.name) != "interval":
                code = "E-UNDECLARED" if node.name not in kinds else "E-TYPE"
                raise ExprTypeError(f"{node.name!r} is not an interval constant", node.loc, code)
            if node.end not in ("lo", "hi"):
                raise ExprTypeError(f"unknown endpoint .{node.end}", node.loc)
            return INT
        if isinstance(node, Unary):
            t = go(node.operand)
            if node.op == "!":
                if t != BOOL:
                    raise ExprTypeError("'!' needs a boolean operand", node.loc)
                return BOOL
            return numeric(t)
        if isinstance(node, Binary):
            lt, rt = go(node.left), go(node.right)
            if node.op in LOGIC:
                if lt != BOOL or rt != BOOL:
                    raise ExprTypeError(f"'{node.op}' needs boolean operands", node.loc)
                return BOOL
            if node.op in ("=", "!="):
                if (lt == BOOL) != (rt == BOOL):
                    raise ExprTypeError(f"'{node.op}' compares boolean with number", node.loc)
                return BOOL
            if node.op in COMPARE:
                return BOOL
            if node.op == "/":
                return REAL
            lt, rt = numeric(lt), numeric(rt)
            return REAL if REAL in (lt, rt) else INT
        if isinstance(node, Call):
            arity = FUNCTIONS.get(node.func)
            if arity is None:
                raise ExprTypeError(f"unknown function {node.func!r}", node.loc)
            lo, hi = arity
            if len(node.args) < lo or (hi is not None and len(node.args) > hi):
                raise ExprTypeError(f"wrong number of arguments to {node.func}", node.loc)
            ts = [numeric(go(a)) for a in node.args]
            if node.func == "mod" and REAL in ts:
                raise ExprTypeError("mod needs integer arguments", node.loc)
            return REAL if REAL in ts else INT
        if isinstance(node, Ite):
            if go(node.cond) != BOOL:
                raise ExprTypeError("condition of '?:' must be boolean", node.loc)
            a, b = go(node.then), go(node.other)
            if (a == BOOL) != (b == BOOL):
                raise ExprTypeError("branches of '?:' mix boolean and number", node.loc)
            if a == BOOL:
                return BOOL
            a, b = numeric(a), numeric(b)
            return REAL if REAL in (a, b) else INT
        raise TypeError(f"not an expression: {node!r}")

    return go(e)


# --------------------------------------------------------------------------
# compilation

class Env:
    """Name resolution for code generation."""

    def __init__(self, var_index: Mapping[str, int], constants: Mapping[str, int],
                 intervals: Mapping[str, tuple]):
        self.var_index = dict(var_index)
        self.constants = dict(constants)
        self.intervals = dict(intervals)

    def kinds(self):
        k = {n: "var" for n in self.var_index}
        k.update({n: "const" for n in self.constants})
        k.update({n: "interval" for n in self.intervals})
        return k


def _codegen(e: Expr, env: Env, vector: bool) -> str:
    kinds = env.kinds()

    def typ(node):
        return infer_type(node, kinds, allow_interval=True)

    def num(node):
        src = go(node)
        return f"(({src}) * 1)" if typ(node) == BOOL else src

    def go(node):
        if isinstance(node, Num):
            if node.value.denominator == 1 and not node.decimal:
                return str(node.value.numerator)
            return repr(float(node.value))
        if isinstance(node, BoolLit):
            return "True" if node.value else "False"
        if isinstance(node, Name):
            if node.id in env.var_index:
                return f"v[{env.var_index[node.id]}]"
            if node.id in env.constants:
                return f"({env.constants[node.id]})"
            return f"c[{node.id!r}]"
        if isinstance(node, Endpoint):
            lo, hi = env.intervals[node.name]
            return f"({lo if node.end == 'lo' else hi})"
        if isinstance(node, Unary):
            if node.op == "!":
                inner = go(node.operand)
                return f"_not({inner})" if vector else f"(not {inner})"
            return f"(-{num(node.operand)})"
        if isinstance(node, Binary):
            if node.op in LOGIC:
                a, b = go(node.left), go(node.right)
                if vector:
                    return f"({a} {node.op} {b})"
                return f"({a} {'and' if node.op == '&' else 'or'} {b})"
            if node.op in COMPARE:
                pyop = "==" if node.op == "=" else node.op
                if node.op in ("=", "!=") and typ(node.left) == BOOL:
                    return f"({go(node.left)} {pyop} {go(node.right)})"
                return f"({num(node.left)} {pyop} {num(node.right)})"
            return f"({num(node.left)} {node.op} {num(node.right)})"
        if isinstance(node, Call):
            args = [num(a) for a in node.args]
            if node.func in ("min", "max"):
                if vector:
                    fn = "_minimum" if node.func == "min" else "_maximum"
                    out = args[0]
                    for a in args[1:]:
                        out = f"{fn}({out}, {a})"
                    return out
                return f"{node.func}({', '.join(args)})"
            if node.func == "abs":
                return f"_abs({args[0]})" if vector else f"abs({args[0]})"
            if node.func == "mod":
                return f"_mod({args[0]}, {args[1]})" if vector else f"({args[0]} % {args[1]})"
        if isinstance(node, Ite):
            cond = go(node.cond)
            if typ(node) == BOOL:
                a, b = go(node.then), go(node.other)
            else:
                a, b = num(node.then), num(node.other)
            if vector:
                return f"_where({cond}, {a}, {b})"
            return f"({a} if {cond} else {b})"
        raise TypeError(f"cannot compile {node!r}")

    return go(e)


_VECTOR_NS = {
    "_not": np.logical_not,
    "_minimum": np.minimum,
    "_maximum": np.maximum,
    "_abs": np.abs,
    "_mod": np.mod,
    "_where": np.where,
}


def compile_scalar(e: Expr, env: Env) -> Callable:
    """``f(v, c)`` with ``v`` a tuple of variable values, ``c`` corner values."""
    src = _codegen(e, env, vector=False)
    return eval(f"lambda v, c=None: {src}", {"__builtins__": {"min": min, "max": max, "abs": abs}})


def compile_vector(e: Expr, env: Env) -> Callable:
    """``f(v, c)`` with ``v`` a sequence of numpy columns; may return a scalar
    when the expression does not mention any variable."""
    src = _codegen(e, env, vector=True)
    return eval(f"lambda v, c=None: {src}", {"__builtins__": {}, **_VECTOR_NS})
