"""Static checks turning a parsed :class:`ModelSource` into a :class:`Model`.

Every violation is collected before raising, so one run reports all of them.
Dynamic properties (weight ties, weight range on reachable states, domain
violations) are left to the state-space builder.
"""
from __future__ import annotations

from fractions import Fraction

from .. import expr as ex
from ..model import Command, Label, Model, Outcome, Reward, VariableDecl
from .syntax import (
    CommandDecl,
    ConstDecl,
    Diagnostic,
    DiagnosticError,
    InitDecl,
    IntervalDecl,
    LabelDecl,
    ModelSource,
    RewardDecl,
    VarDecl,
)

MAX_CORNER_CONSTANTS = 8
RESERVED_LABELS = {"deadlock", "absorbing"}
PROB_SUM_EPS = Fraction(1, 10**9)


def _loc(node, fallback):
    loc = getattr(node, "loc", None)
    return loc if loc is not None else fallback


def validate(source: ModelSource) -> Model:
    diags = []

    def error(code, loc, message):
        line, col = loc if loc is not None else (1, 1)
        diags.append(Diagnostic("error", line, col, message, code))

    constants, intervals, variables = {}, {}, []
    kinds = {}
    init_decls = []
    labels, rewards, commands = [], [], []

    for st in source.statements:
        if isinstance(st, (ConstDecl, IntervalDecl, VarDecl)):
            if st.name in kinds:
                error("E-DUPLICATE", st.loc, f"{st.name!r} is already declared")
                continue
        if isinstance(st, ConstDecl):
            kinds[st.name] = "const"
            constants[st.name] = st.value
        elif isinstance(st, IntervalDecl):
            kinds[st.name] = "interval"
            if st.lo > st.hi:
                error("E-INTERVAL", st.loc, f"interval {st.name} = [{st.lo}..{st.hi}] has lo > hi")
                intervals[st.name] = (st.lo, st.lo)
            else:
                intervals[st.name] = (st.lo, st.hi)
        elif isinstance(st, VarDecl):
            kinds[st.name] = "var"
            if st.lo > st.hi:
                error("E-DOMAIN", st.loc, f"variable {st.name} has empty domain [{st.lo}..{st.hi}]")
                variables.append(VariableDecl(st.name, st.lo, st.lo, st.init, loc=st.loc))
                continue
            if st.init is not None and not st.lo <= st.init <= st.hi:
                error("E-DOMAIN", st.loc, f"initial value {st.init} of {st.name} outside [{st.lo}..{st.hi}]")
            variables.append(VariableDecl(st.name, st.lo, st.hi, st.init, loc=st.loc))
        elif isinstance(st, InitDecl):
            init_decls.append(st)
        elif isinstance(st, LabelDecl):
            labels.append(st)
        elif isinstance(st, RewardDecl):
            rewards.append(st)
        elif isinstance(st, CommandDecl):
            commands.append(st)

    if not variables:
        error("E-EMPTY", (1, 1), "no variables declared")

    def check(e, want, what, *, allow_interval=False):
        try:
            t = ex.infer_type(e, kinds, allow_interval=allow_interval)
        except ex.ExprTypeError as err:
            error(err.code, _loc(err, _loc(e, None)), f"{err} (in {what})")
            return None
        if want == ex.BOOL and t != ex.BOOL:
            error("E-TYPE", _loc(e, None), f"{what} must be boolean")
        elif want == ex.INT and t != ex.INT:
            error("E-TYPE", _loc(e, None), f"{what} must be integer-valued")
        return t

    # initial states
    init_expr = None
    if len(init_decls) > 1:
        for st in init_decls[1:]:
            error("E-INIT", st.loc, "more than one init constraint")
    if init_decls:
        init_expr = init_decls[0].expr
        check(init_expr, ex.BOOL, "init constraint")
        for v in variables:
            if v.init is not None:
                error("E-INIT", v.loc, f"{v.name} has an init value and an init constraint is also given")
    else:
        for v in variables:
            if v.init is None:
                error("E-NOINIT", v.loc, f"variable {v.name} has no initial value")

    # labels
    seen_labels = set()
    model_labels = []
    for st in labels:
        if st.name in RESERVED_LABELS:
            error("E-RESERVED", st.loc, f"label name {st.name!r} is reserved")
        elif st.name in seen_labels:
            error("E-DUPLICATE", st.loc, f"label {st.name!r} is already declared")
        seen_labels.add(st.name)
        check(st.expr, ex.BOOL, f"label {st.name}")
        model_labels.append(Label(st.name, st.expr, loc=st.loc))

    # commands
    actions = {c.action for c in commands}
    model_commands = []
    for st in commands:
        what = f"command [{st.action}]"
        check(st.guard, ex.BOOL, f"guard of {what}")
        wt = check(st.weight, "num", f"weight of {what}")
        if wt is not None and not any(isinstance(n, (ex.Name,)) and kinds.get(n.id) == "var"
                                      for n in ex.walk(st.weight)):
            try:
                value = float(ex.compile_scalar(st.weight, ex.Env({}, constants, intervals))(()))
            except ZeroDivisionError:
                value = float("nan")
            if not 0.0 <= value <= 1.0:
                error("E-WEIGHT", _loc(st.weight, st.loc), f"weight {value} of {what} is outside [0,1]")
        total = Fraction(0)
        free = []
        for outcome in st.outcomes:
            p = outcome.probability
            total += p
            if not 0 < p <= 1:
                error("E-PROB", _loc(outcome, st.loc), f"probability {p} in {what} not in (0,1]")
            targets = set()
            for u in outcome.updates:
                if kinds.get(u.variable) != "var":
                    code = "E-UNDECLARED" if u.variable not in kinds else "E-TYPE"
                    error(code, u.loc, f"update target {u.variable!r} is not a declared variable")
                elif u.variable in targets:
                    error("E-UPDATE", u.loc, f"{u.variable} updated twice in one outcome of {what}")
                targets.add(u.variable)
                check(u.amount, ex.INT, f"update of {u.variable} in {what}", allow_interval=True)
                for n in ex.names(u.amount):
                    if n in intervals and intervals[n][0] != intervals[n][1] and n not in free:
                        free.append(n)
        if abs(total - 1) > PROB_SUM_EPS:
            error("E-PROBSUM", st.loc, f"outcome probabilities of {what} sum to {float(total):g}, not 1")
        if len(free) > MAX_CORNER_CONSTANTS:
            error("E-CORNERS", st.loc,
                  f"{what} uses {len(free)} interval constants (at most {MAX_CORNER_CONSTANTS})")
        model_commands.append(Command(st.action, st.guard, st.weight, tuple(
            Outcome(o.probability, o.updates, loc=o.loc) for o in st.outcomes), loc=st.loc))

    # rewards
    model_rewards = []
    for st in rewards:
        if st.action is not None and st.action not in actions:
            error("E-UNDECLARED", st.loc, f"reward {st.name} refers to unknown action {st.action!r}")
        check(st.expr, "num", f"reward {st.name}")
        model_rewards.append(Reward(st.name, st.action, st.expr, loc=st.loc))

    if diags:
        diags.sort(key=lambda d: (d.line, d.column))
        raise DiagnosticError(diags)
    return Model(
        variables=tuple(variables),
        constants=constants,
        intervals=intervals,
        commands=tuple(model_commands),
        labels=tuple(model_labels),
        rewards=tuple(model_rewards),
        init=init_expr,
    )
