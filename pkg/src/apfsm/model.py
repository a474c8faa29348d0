"""Autonomous probabilistic finite-state machines.

A :class:`Model` is the tuple (V, I, A, T, w): declared variables with finite
integer domains, a set of initial valuations, and guarded commands.  Each
command names an action, a guard (where the action is available), a weight
expression and a distribution over update lists.  In every state the enabled
action with the largest weight is taken, so the machine behaves as a Markov
chain; interval constants re-introduce bounded non-determinism through their
lo/hi corners.

The functions here give the reference, one-valuation-at-a-time semantics.
The state-space builder uses a vectorised compilation of the same rules
(:mod:`apfsm.compiled`).
"""
from __future__ import annotations

import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction

from . import expr as ex
from .errors import (
    CornerRequired,
    DomainViolation,
    NoAction,
    OverlappingCommands,
    WeightRange,
    WeightTie,
)

PROB_EPS = 1e-9


@dataclass(frozen=True)
class VariableDecl:
    name: str
    lo: int
    hi: int
    init: int | None = None
    loc: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty domain [{self.lo}..{self.hi}] for {self.name}")


@dataclass(frozen=True)
class UpdateOp:
    """``v := e`` (assign) or ``v += e`` / ``v -= e`` (delta)."""

    variable: str
    op: str
    amount: ex.Expr
    loc: tuple = field(default=None, compare=False, repr=False)

    @property
    def kind(self):
        return "assign" if self.op == ":=" else "delta"


@dataclass(frozen=True)
class Outcome:
    probability: Fraction
    updates: tuple = ()
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Command:
    action: str
    guard: ex.Expr
    weight: ex.Expr
    outcomes: tuple
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Label:
    name: str
    expr: ex.Expr
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Reward:
    """Accrues ``expr`` (evaluated in the source state) on every step, or only
    on steps taking ``action`` when one is given."""

    name: str
    action: str | None
    expr: ex.Expr
    loc: tuple = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Model:
    variables: tuple
    constants: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)
    commands: tuple = ()
    labels: tuple = ()
    rewards: tuple = ()
    init: ex.Expr | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    # -- name tables -------------------------------------------------------
    @property
    def var_names(self):
        return tuple(v.name for v in self.variables)

    @property
    def var_index(self):
        idx = self._cache.get("var_index")
        if idx is None:
            idx = self._cache["var_index"] = {v.name: i for i, v in enumerate(self.variables)}
        return idx

    @property
    def env(self) -> ex.Env:
        env = self._cache.get("env")
        if env is None:
            env = self._cache["env"] = ex.Env(self.var_index, self.constants, self.intervals)
        return env

    @property
    def actions(self):
        return tuple(dict.fromkeys(c.action for c in self.commands))

    def label(self, name) -> Label:
        for lab in self.labels:
            if lab.name == name:
                return lab
        raise KeyError(f"no label {name!r}")

    def scalar(self, e: ex.Expr):
        fns = self._cache.setdefault("scalar", {})
        fn = fns.get(e)
        if fn is None:
            fn = fns[e] = ex.compile_scalar(e, self.env)
        return fn

    # -- valuations --------------------------------------------------------
    def valuation(self, values=None, **kw) -> "Valuation":
        if values is None:
            values = [kw[v.name] for v in self.variables]
        elif isinstance(values, Mapping):
            values = [values[v.name] for v in self.variables]
        s = Valuation(self, tuple(int(x) for x in values))
        for decl, x in zip(self.variables, s.values):
            if not decl.lo <= x <= decl.hi:
                raise DomainViolation(decl.name, x)
        return s

    def initial_states(self) -> list:
        """The set I, in lexicographic order of variable values when given by
        a constraint."""
        if self.init is None:
            return [self.valuation([v.init for v in self.variables])]
        guard = self.scalar(self.init)
        ranges = [range(v.lo, v.hi + 1) for v in self.variables]
        return [Valuation(self, vals) for vals in itertools.product(*ranges) if guard(vals)]

    # -- interval corners --------------------------------------------------
    def interval_names(self, command: Command, *, include_degenerate=False) -> list:
        """Interval constants referenced bare in the command's updates."""
        found = []
        for outcome in command.outcomes:
            for u in outcome.updates:
                for n in ex.names(u.amount):
                    if n in self.intervals and n not in found:
                        found.append(n)
        if include_degenerate:
            return found
        return [n for n in found if self.intervals[n][0] != self.intervals[n][1]]

    def corners(self, command: Command) -> list:
        """All lo/hi corner assignments, first-referenced constant most
        significant, lo before hi.  Degenerate intervals are fixed."""
        key = ("corners", command)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        every = self.interval_names(command, include_degenerate=True)
        free = [n for n in every if self.intervals[n][0] != self.intervals[n][1]]
        fixed = {n: self.intervals[n][0] for n in every if n not in free}
        result = []
        for combo in itertools.product(*[self.intervals[n] for n in free]):
            corner = dict(fixed)
            corner.update(zip(free, combo))
            result.append(corner)
        self._cache[key] = result
        return result


class Valuation(Mapping):
    """Total assignment of the model's variables; immutable and hashable."""

    __slots__ = ("model", "values")

    def __init__(self, model: Model, values: tuple):
        self.model = model
        self.values = values

    def __getitem__(self, name):
        return self.values[self.model.var_index[name]]

    def __iter__(self):
        return iter(self.model.var_names)

    def __len__(self):
        return len(self.values)

    def __hash__(self):
        return hash(self.values)

    def __eq__(self, other):
        if isinstance(other, Valuation):
            return self.values == other.values and self.model.var_names == other.model.var_names
        return Mapping.__eq__(self, other)

    def __repr__(self):
        return "Valuation(" + ", ".join(f"{k}={v}" for k, v in self.items()) + ")"

    def replace(self, **kw) -> "Valuation":
        vals = list(self.values)
        for name, x in kw.items():
            vals[self.model.var_index[name]] = x
        return self.model.valuation(vals)


# --------------------------------------------------------------------------
# semantics

def _evaluate_update(s: Valuation, u: UpdateOp, corner):
    model = s.model
    i = model.var_index[u.variable]
    x = model.scalar(u.amount)(s.values, corner)
    if u.op == ":=":
        new = x
    elif u.op == "+=":
        new = s.values[i] + x
    else:
        new = s.values[i] - x
    if new != int(new):
        raise DomainViolation(u.variable, new, s)
    new = int(new)
    decl = model.variables[i]
    if not decl.lo <= new <= decl.hi:
        raise DomainViolation(u.variable, new, s)
    return i, new


def _check_corner(model, u_list, corner):
    needed = set()
    for u in u_list:
        needed.update(n for n in ex.names(u.amount) if n in model.intervals)
    if not needed:
        return corner
    corner = dict(corner or {})
    missing = []
    for n in needed:
        lo, hi = model.intervals[n]
        if n not in corner:
            if lo == hi:
                corner[n] = lo
            else:
                missing.append(n)
    if missing:
        raise CornerRequired("?", sorted(missing))
    return corner


def apply_update(s: Valuation, u: UpdateOp, corner=None) -> Valuation:
    """s[v:=x] or s[v±x]; raises DomainViolation rather than clamping."""
    corner = _check_corner(s.model, [u], corner)
    i, new = _evaluate_update(s, u, corner)
    vals = list(s.values)
    vals[i] = new
    return Valuation(s.model, tuple(vals))


def apply_updates(s: Valuation, updates, corner=None) -> Valuation:
    """Simultaneous application: every right-hand side sees the old state."""
    corner = _check_corner(s.model, updates, corner)
    vals = list(s.values)
    for u in updates:
        i, new = _evaluate_update(s, u, corner)
        vals[i] = new
    return Valuation(s.model, tuple(vals))


def enabled_commands(model: Model, s: Valuation) -> list:
    return [c for c in model.commands if model.scalar(c.guard)(s.values)]


def enabled_actions(model: Model, s: Valuation) -> frozenset:
    """A(s): actions of commands whose guard holds."""
    return frozenset(c.action for c in enabled_commands(model, s))


def weight(model: Model, s: Valuation, action: str) -> float:
    """w(s, a); zero for actions not enabled at s."""
    for c in enabled_commands(model, s):
        if c.action == action:
            return float(model.scalar(c.weight)(s.values))
    return 0.0


def select_command(model: Model, s: Valuation) -> Command:
    cmds = enabled_commands(model, s)
    if not cmds:
        raise NoAction(s)
    seen = {}
    for c in cmds:
        if c.action in seen:
            raise OverlappingCommands(s, c.action)
        w = float(model.scalar(c.weight)(s.values))
        if not 0.0 <= w <= 1.0:
            raise WeightRange(s, c.action, w)
        seen[c.action] = (w, c)
    ranked = sorted(seen.items(), key=lambda kv: -kv[1][0])
    for (a, (wa, _)), (b, (wb, _)) in zip(ranked, ranked[1:]):
        if wa == wb:
            raise WeightTie(s, a, b, wa)
    return ranked[0][1][1]


def select_action(model: Model, s: Valuation) -> str:
    """arg max of w(s, ·) over A(s)."""
    return select_command(model, s).action


def command_for(model: Model, s: Valuation, action: str) -> Command:
    matches = [c for c in enabled_commands(model, s) if c.action == action]
    if not matches:
        raise ValueError(f"action {action!r} is not enabled in {s!r}")
    if len(matches) > 1:
        raise OverlappingCommands(s, action)
    return matches[0]


def outcome_distribution(model: Model, s: Valuation, action: str, corner=None) -> list:
    """T(s, a) as ``[(probability, successor), ...]`` with exact probabilities,
    duplicate successors merged in first-occurrence order."""
    cmd = command_for(model, s, action)
    free = model.interval_names(cmd)
    if free and (corner is None or any(n not in corner for n in free)):
        raise CornerRequired(action, free, s)
    corner = {**model.corners(cmd)[0], **(corner or {})}
    merged = {}
    for outcome in cmd.outcomes:
        succ = apply_updates(s, outcome.updates, corner)
        merged[succ] = merged.get(succ, 0) + outcome.probability
    return [(p, t) for t, p in merged.items()]


def is_absorbing(model: Model, s: Valuation) -> bool:
    """No enabled action, or every resolution of the selected command stays put."""
    if not enabled_commands(model, s):
        return True
    cmd = select_command(model, s)
    for corner in model.corners(cmd):
        for p, t in outcome_distribution(model, s, cmd.action, corner):
            if t != s:
                return False
    return True
