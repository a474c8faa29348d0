"""Lexer and recursive-descent parser for ``.apfsm`` model files.

Grammar (statements are ``;``-terminated, ``//`` starts a comment)::

    const NAME = INT;
    const interval NAME = [INT..INT];
    var NAME : [INT..INT] (init INT)?;
    init EXPR;
    label NAME = EXPR;
    reward NAME ([ACTION])? = EXPR;
    [ACTION] GUARD weight EXPR -> P:(UPD, ...) + P:(UPD, ...);

where ``P`` is a decimal or ``n/d`` literal and ``UPD`` is ``v := e``,
``v += e`` or ``v -= e``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from .. import expr as ex
from ..model import Outcome, UpdateOp

KEYWORDS = {"const", "interval", "var", "init", "label", "reward", "weight", "true", "false"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<dec>\d+\.\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|\+=|-=|->|\.\.|<=|>=|!=|[=<>+\-*/&|!?:()\[\],;.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    column: int
    message: str
    code: str

    def format(self, filename="<model>"):
        return f"{filename}:{self.line}:{self.column}: {self.severity} {self.code}: {self.message}"

    def __str__(self):
        return self.format()


class DiagnosticError(Exception):
    """Raised by parsing/validation with every collected diagnostic."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))

    @property
    def codes(self):
        return [d.code for d in self.diagnostics]


# -- statements -----------------------------------------------------------

@dataclass(frozen=True)
class ConstDecl:
    name: str
    value: int
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IntervalDecl:
    name: str
    lo: int
    hi: int
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class VarDecl:
    name: str
    lo: int
    hi: int
    init: int | None
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class InitDecl:
    expr: ex.Expr
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class LabelDecl:
    name: str
    expr: ex.Expr
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class RewardDecl:
    name: str
    action: str | None
    expr: ex.Expr
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CommandDecl:
    action: str
    guard: ex.Expr
    weight: ex.Expr
    outcomes: tuple
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ModelSource:
    """Parsed file: statements in source order (structural equality ignores
    locations and the raw text)."""

    statements: tuple
    text: str = field(default="", compare=False, repr=False)


# -- lexer ----------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # int, dec, ident, kw, op, eof
    text: str
    line: int
    col: int

    @property
    def loc(self):
        return (self.line, self.col)


class _SyntaxError(Exception):
    def __init__(self, message, loc, code="E-SYNTAX"):
        super().__init__(message)
        self.loc = loc
        self.code = code


def tokenize(text: str) -> list:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise _SyntaxError(f"unexpected character {text[pos]!r}", (line, col), "E-LEX")
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("ws", "comment"):
            pass
        else:
            if kind == "ident" and value in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, value, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# -- parser ---------------------------------------------------------------

class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text, kind=None):
        t = self.tok
        return t.text == text and t.kind != "eof" and (kind is None or t.kind == kind)

    def accept(self, text):
        if self.at(text):
            return self.advance()
        return None

    def expect(self, text):
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise _SyntaxError(f"expected '{text}', found '{found}'", self.tok.loc)
        return self.advance()

    def ident(self):
        t = self.tok
        if t.kind != "ident":
            found = t.text or "end of input"
            raise _SyntaxError(f"expected identifier, found '{found}'", t.loc)
        return self.advance()

    def integer(self, signed=False):
        neg = signed and self.accept("-") is not None
        t = self.tok
        if t.kind != "int":
            raise _SyntaxError(f"expected integer, found '{t.text or 'end of input'}'", t.loc)
        self.advance()
        return -int(t.text) if neg else int(t.text)

    # statements
    def statement(self):
        t = self.tok
        if t.text == "const" and t.kind == "kw":
            self.advance()
            if self.accept("interval"):
                name = self.ident()
                self.expect("=")
                self.expect("[")
                lo = self.integer(signed=True)
                self.expect("..")
                hi = self.integer(signed=True)
                self.expect("]")
                self.expect(";")
                return IntervalDecl(name.text, lo, hi, loc=name.loc)
            name = self.ident()
            self.expect("=")
            value = self.integer(signed=True)
            self.expect(";")
            return ConstDecl(name.text, value, loc=name.loc)
        if t.text == "var" and t.kind == "kw":
            self.advance()
            name = self.ident()
            self.expect(":")
            self.expect("[")
            lo = self.integer(signed=True)
            self.expect("..")
            hi = self.integer(signed=True)
            self.expect("]")
            init = None
            if self.accept("init"):
                init = self.integer(signed=True)
            self.expect(";")
            return VarDecl(name.text, lo, hi, init, loc=name.loc)
        if t.text == "init" and t.kind == "kw":
            self.advance()
            e = self.expression()
            self.expect(";")
            return InitDecl(e, loc=t.loc)
        if t.text == "label" and t.kind == "kw":
            self.advance()
            name = self.ident()
            self.expect("=")
            e = self.expression()
            self.expect(";")
            return LabelDecl(name.text, e, loc=name.loc)
        if t.text == "reward" and t.kind == "kw":
            self.advance()
            name = self.ident()
            action = None
            if self.accept("["):
                action = self.ident().text
                self.expect("]")
            self.expect("=")
            e = self.expression()
            self.expect(";")
            return RewardDecl(name.text, action, e, loc=name.loc)
        if t.text == "[" and t.kind == "op":
            self.advance()
            action = self.ident()
            self.expect("]")
            guard = self.expression()
            self.expect("weight")
            weight = self.expression()
            self.expect("->")
            outcomes = [self.outcome()]
            while self.accept("+"):
                outcomes.append(self.outcome())
            self.expect(";")
            return CommandDecl(action.text, guard, weight, tuple(outcomes), loc=t.loc)
        raise _SyntaxError(f"unexpected '{t.text or 'end of input'}' at start of statement", t.loc)

    def probability(self):
        t = self.tok
        if t.kind == "dec":
            self.advance()
            return Fraction(t.text)
        if t.kind == "int":
            self.advance()
            if self.accept("/"):
                d = self.tok
                den = self.integer()
                if den == 0:
                    raise _SyntaxError("zero denominator", d.loc)
                return Fraction(int(t.text), den)
            return Fraction(int(t.text))
        raise _SyntaxError(f"expected probability, found '{t.text or 'end of input'}'", t.loc)

    def outcome(self):
        start = self.tok
        p = self.probability()
        self.expect(":")
        self.expect("(")
        updates = []
        if not self.at(")"):
            updates.append(self.update())
            while self.accept(","):
                updates.append(self.update())
        self.expect(")")
        return Outcome(p, tuple(updates), loc=start.loc)

    def update(self):
        name = self.ident()
        t = self.tok
        if t.text not in (":=", "+=", "-="):
            raise _SyntaxError(f"expected ':=', '+=' or '-=', found '{t.text or 'end of input'}'", t.loc)
        self.advance()
        return UpdateOp(name.text, t.text, self.expression(), loc=name.loc)

    # expressions
    def expression(self):
        return self.ite()

    def ite(self):
        cond = self.disjunction()
        q = self.accept("?")
        if q is None:
            return cond
        then = self.ite()
        self.expect(":")
        other = self.ite()
        return ex.Ite(cond, then, other, loc=q.loc)

    def _binary_chain(self, ops, sub):
        left = sub()
        while self.tok.kind == "op" and self.tok.text in ops:
            t = self.advance()
            left = ex.Binary(t.text, left, sub(), loc=t.loc)
        return left

    def disjunction(self):
        return self._binary_chain(("|",), self.conjunction)

    def conjunction(self):
        return self._binary_chain(("&",), self.negation)

    def negation(self):
        t = self.accept("!")
        if t is not None:
            return ex.Unary("!", self.negation(), loc=t.loc)
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.tok.kind == "op" and self.tok.text in ex.COMPARE:
            t = self.advance()
            left = ex.Binary(t.text, left, self.additive(), loc=t.loc)
            if self.tok.kind == "op" and self.tok.text in ex.COMPARE:
                raise _SyntaxError("comparisons do not chain; add parentheses", self.tok.loc)
        return left

    def additive(self):
        return self._binary_chain(("+", "-"), self.multiplicative)

    def multiplicative(self):
        return self._binary_chain(("*", "/"), self.unary)

    def unary(self):
        t = self.accept("-")
        if t is not None:
            return ex.Unary("-", self.unary(), loc=t.loc)
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            return ex.Num(Fraction(int(t.text)), loc=t.loc)
        if t.kind == "dec":
            self.advance()
            return ex.Num(Fraction(t.text), decimal=True, loc=t.loc)
        if t.kind == "kw" and t.text in ("true", "false"):
            self.advance()
            return ex.BoolLit(t.text == "true", loc=t.loc)
        if t.kind == "ident":
            self.advance()
            if self.accept("("):
                args = [self.expression()]
                while self.accept(","):
                    args.append(self.expression())
                self.expect(")")
                return ex.Call(t.text, tuple(args), loc=t.loc)
            if self.accept("."):
                end = self.ident()
                if end.text not in ("lo", "hi"):
                    raise _SyntaxError(f"expected 'lo' or 'hi' after '.', found '{end.text}'", end.loc)
                return ex.Endpoint(t.text, end.text, loc=t.loc)
            return ex.Name(t.text, loc=t.loc)
        if self.accept("("):
            e = self.expression()
            self.expect(")")
            return e
        raise _SyntaxError(f"expected expression, found '{t.text or 'end of input'}'", t.loc)

    def recover(self):
        """Skip past the next ';' so later statements still get checked."""
        while self.tok.kind != "eof" and not self.at(";"):
            self.advance()
        self.accept(";")


def parse_model(text: str) -> ModelSource:
    """Parse model text; raises DiagnosticError listing every syntax error."""
    diags = []
    try:
        tokens = tokenize(text)
    except _SyntaxError as err:
        raise DiagnosticError([Diagnostic("error", *err.loc, str(err), err.code)]) from None
    parser = Parser(tokens)
    statements = []
    while parser.tok.kind != "eof":
        start = parser.i
        try:
            statements.append(parser.statement())
        except _SyntaxError as err:
            diags.append(Diagnostic("error", *err.loc, str(err), err.code))
            if parser.i == start:
                parser.advance()
            parser.recover()
    if not diags and not any(isinstance(s, VarDecl) for s in statements):
        diags.append(Diagnostic("error", 1, 1, "no variables declared", "E-EMPTY"))
    if diags:
        raise DiagnosticError(diags)
    return ModelSource(tuple(statements), text)
