"""Generator for the UAV search-and-retrieve mission model.

The UAV takes off from base (0,0), runs a system check, sweeps the arena in
lawnmower order looking for objects, and for every object found approaches,
descends, grabs, ascends, transports it to the deposit site and drops it
there.  Low battery sends it home for a full recharge after which it resumes
where it left off; running out of time sends it home for good.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from enum import IntEnum
from fractions import Fraction
from pathlib import Path

from .errors import StateBudgetExceeded
from .expr import format_fraction
from .statespace import state_budget


class Mode(IntEnum):
    TAKEOFF = 0
    CHECK = 1
    SEARCH = 2
    APPROACH = 3
    DESCEND = 4
    GRAB = 5
    ASCEND = 6
    TRANSPORT = 7
    DEPOSIT = 8
    RETURN = 9
    RECHARGE = 10
    EMERGENCY = 11
    COMPLETE = 12
    ABANDONED = 13


TERMINAL_MODES = frozenset({Mode.EMERGENCY, Mode.COMPLETE, Mode.ABANDONED})

# reasons for heading home
RSN_DONE, RSN_RECHARGE, RSN_ABORT = 0, 1, 2


def _interval(x):
    if isinstance(x, (int, float)):
        return (int(x), int(x))
    lo, hi = x
    return (int(lo), int(hi))


@dataclass
class ScenarioParams:
    """Mission parameters.  Times are in seconds, battery in charge units.

    ``t_cell``/``b_cell`` are the per-cell flight cost; the other ``(lo, hi)``
    pairs become interval constants (equal endpoints mean a fixed value)."""

    width: int = 4
    height: int = 4
    objects: int = 1
    time_limit: int = 100
    capacity: int = 60
    b_low: int = 15
    t_cell: tuple = (1, 1)
    b_cell: tuple = (1, 1)
    t_ap: tuple = (3, 3)
    b_ap: tuple = (2, 2)
    t_descend: tuple = (1, 1)
    b_descend: tuple = (1, 1)
    t_grab: tuple = (1, 1)
    b_grab: tuple = (1, 1)
    t_ascend: tuple = (1, 1)
    b_ascend: tuple = (1, 1)
    t_takeoff: int = 1
    b_takeoff: int = 1
    t_check: int = 1
    b_check: int = 1
    t_deposit: int = 1
    b_deposit: int = 1
    t_recharge: int = 20
    alpha: float | str = 0.25
    p_drop: float | str = 0.05
    p_emergency: float | str = 0.001
    p_grab_fail: float | str = 0
    p_check_fail: float | str = 0
    deposit: tuple = (0, 0)

    INTERVAL_FIELDS = ("t_cell", "b_cell", "t_ap", "b_ap", "t_descend", "b_descend",
                       "t_grab", "b_grab", "t_ascend", "b_ascend")
    PROB_FIELDS = ("alpha", "p_drop", "p_emergency", "p_grab_fail", "p_check_fail")

    def __post_init__(self):
        for name in self.INTERVAL_FIELDS:
            setattr(self, name, _interval(getattr(self, name)))
        self.deposit = tuple(int(v) for v in self.deposit)
        self.validate()

    def prob(self, name) -> Fraction:
        """Probability field as an exact fraction (decimal text is read
        literally, so 0.1 is 1/10)."""
        v = getattr(self, name)
        return Fraction(str(v)) if isinstance(v, float) else Fraction(v)

    @property
    def cells(self):
        return self.width * self.height

    @property
    def max_distance(self):
        return self.width - 1 + self.height - 1

    def validate(self):
        errs = []
        if self.width < 1 or self.height < 1:
            errs.append("arena must be at least 1x1")
        if self.objects < 1:
            errs.append("object count must be >= 1")
        if self.time_limit <= 0:
            errs.append("time limit must be > 0")
        if not 0 < self.b_low < self.capacity:
            errs.append("need 0 < b_low < capacity")
        for name in self.PROB_FIELDS:
            try:
                p = self.prob(name)
            except (ValueError, TypeError, ZeroDivisionError):
                errs.append(f"{name} is not a number")
                continue
            if not 0 <= p <= 1:
                errs.append(f"{name} must lie in [0,1]")
        if not self.prob("p_grab_fail") < 1:
            errs.append("p_grab_fail must be < 1")
        for name in self.INTERVAL_FIELDS:
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                errs.append(f"{name} needs 0 <= lo <= hi")
            elif name.startswith("t_") and lo < 1:
                errs.append(f"{name} must take at least 1 time unit")
        for name in ("t_takeoff", "t_check", "t_deposit", "t_recharge"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        for name in ("b_takeoff", "b_check", "b_deposit"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        dx, dy = self.deposit
        if not (0 <= dx < self.width and 0 <= dy < self.height):
            errs.append("deposit site outside the arena")
        if self.capacity < self.max_distance * self.b_cell[1]:
            errs.append("capacity cannot cover a flight across the arena")
        if errs:
            raise ValueError("invalid scenario parameters: " + "; ".join(errs))

    # ---------------------------------------------------------- derived sizes

    @property
    def max_step_time(self):
        r = self.max_distance * self.t_cell[1]
        return max(self.t_takeoff, self.t_check, self.t_cell[1], self.t_ap[1], self.t_descend[1],
                   self.t_grab[1], self.t_ascend[1], self.t_deposit, r, self.t_recharge + r)

    @property
    def t_max(self):
        """Upper bound of the mission clock: a step started just before the
        limit, followed by the flight home."""
        return self.time_limit - 1 + self.max_step_time + self.max_distance * self.t_cell[1]

    def estimated_states(self):
        return self.cells * (self.time_limit + 1) * (self.capacity + 1) * (self.objects + 1)

    # ---------------------------------------------------------- io

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario parameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_stats(self, stats: dict) -> "ScenarioParams":
        """Take timing, battery and event figures from a calibration table."""
        upd = {}

        def iv(action, quantity, clamp):
            e = stats[action][quantity]
            lo, hi = int(e["lo"]), int(e["hi"])
            return (max(lo, clamp), max(hi, clamp))

        pairs = {"approach": ("t_ap", "b_ap"), "search": ("t_cell", "b_cell"),
                 "descend": ("t_descend", "b_descend"), "grab": ("t_grab", "b_grab"),
                 "ascend": ("t_ascend", "b_ascend")}
        for action, (tname, bname) in pairs.items():
            if action in stats:
                upd[tname] = iv(action, "time", 1)
                upd[bname] = iv(action, "battery", 0)
        probs = {("search", "detect"): "alpha", ("transport", "drop"): "p_drop",
                 ("grab", "fail"): "p_grab_fail"}
        for (action, key), name in probs.items():
            if action in stats and key in stats[action].get("prob", {}):
                upd[name] = _round_prob(stats[action]["prob"][key])
        return replace(self, **upd)


def _round_prob(p, digits=6):
    return str(round(float(p), digits))


def search_pattern(p: ScenarioParams, pos):
    """Next cell of the lawnmower sweep: even rows left to right, odd rows
    right to left; after the last cell the sweep restarts at (0,0)."""
    x, y = pos
    if not (0 <= x < p.width and 0 <= y < p.height):
        raise ValueError(f"{pos} is outside the {p.width}x{p.height} arena")
    if y % 2 == 0 and x < p.width - 1:
        return (x + 1, y)
    if y % 2 == 1 and x > 0:
        return (x - 1, y)
    if y < p.height - 1:
        return (x, y + 1)
    return (0, 0)


def last_cell(p: ScenarioParams):
    y = p.height - 1
    return (p.width - 1, y) if y % 2 == 0 else (0, y)


# ---------------------------------------------------------------- text emission

def _p(x: Fraction) -> str:
    return format_fraction(x, decimal=False)


@dataclass
class _Emitter:
    p: ScenarioParams
    e: Fraction
    lines: list = field(default_factory=list)

    def command(self, action, guard, weight, outcomes, airborne=False):
        outs = [(Fraction(q), u) for q, u in outcomes]
        if airborne and self.e > 0:
            outs = [(q * (1 - self.e), u) for q, u in outs]
            outs.append((self.e, [f"m := {Mode.EMERGENCY}"]))
        outs = [(q, u) for q, u in outs if q > 0]
        body = " + ".join(f"{_p(q)}:({', '.join(u)})" for q, u in outs)
        self.lines.append(f"  [{action}] {guard} weight {weight} -> {body};")

    def consuming(self, action, guard, weight, cost, outcomes, airborne=True):
        """Command guarded by enough battery for its worst-case cost, plus a
        forced landing when the battery cannot cover it."""
        self.command(action, f"{guard} & b >= {cost}", weight, outcomes, airborne)
        self.command("ForcedLanding", f"{guard} & b < {cost}", weight, [(1, [f"m := {Mode.EMERGENCY}"])])


def generate_model(p: ScenarioParams, *, budget: int | None = None) -> str:
    """Model text for ``p``.  Raises :class:`StateBudgetExceeded` when the
    coarse size estimate exceeds the state budget."""
    budget = state_budget() if budget is None else budget
    est = p.estimated_states()
    if est > budget:
        raise StateBudgetExceeded(budget, est)

    W, H, N = p.width, p.height, p.objects
    alpha, drop = p.prob("alpha"), p.prob("p_drop")
    gfail, cfail = p.prob("p_grab_fail"), p.prob("p_check_fail")
    DX, DY = p.deposit
    M = Mode
    lx, ly = last_cell(p)

    head = [
        f"// UAV search and retrieve: {W}x{H} arena, {N} object(s), time limit {p.time_limit}",
        f"// params: {json.dumps(p.to_dict(), sort_keys=True)}",
        f"const LIMIT = {p.time_limit};",
        f"const CAP = {p.capacity};",
        f"const BLOW = {p.b_low};",
        f"const DX = {DX};",
        f"const DY = {DY};",
        f"const T_to = {p.t_takeoff};",
        f"const B_to = {p.b_takeoff};",
        f"const T_ck = {p.t_check};",
        f"const B_ck = {p.b_check};",
        f"const T_dep = {p.t_deposit};",
        f"const B_dep = {p.b_deposit};",
        f"const T_rech = {p.t_recharge};",
    ]
    names = {"t_cell": "T_cell", "b_cell": "B_cell", "t_ap": "T_ap", "b_ap": "B_ap",
             "t_descend": "T_de", "b_descend": "B_de", "t_grab": "T_gr", "b_grab": "B_gr",
             "t_ascend": "T_as", "b_ascend": "B_as"}
    for f_, n in names.items():
        lo, hi = getattr(p, f_)
        head.append(f"const interval {n} = [{lo}..{hi}];")
    head += [
        "",
        f"var m : [0..13] init {M.TAKEOFF};",
        f"var obj : [0..{N}] init {N};",
        "var carry : [0..1] init 0;",
        f"var px : [0..{W - 1}] init 0;",
        f"var py : [0..{H - 1}] init 0;",
        f"var rx : [0..{W - 1}] init 0;",
        f"var ry : [0..{H - 1}] init 0;",
        "var rsn : [0..2] init 0;",
        f"var t : [0..{p.t_max}] init 0;",
        f"var b : [0..{p.capacity}] init {p.capacity};",
        "",
        f"label success = m = {M.COMPLETE} & obj = 0;",
        f"label missed = m = {M.COMPLETE} & obj > 0;",
        f"label emergency = m = {M.EMERGENCY};",
        f"label timeout = m = {M.ABANDONED};",
        f"label recharging = m = {M.RECHARGE};",
        "",
        "reward steps = 1;",
        f"reward drops [Transport] = {_p(drop * (1 - p.prob('p_emergency')))};",
        "reward recharges [Recharge] = 1;",
        "reward grabs [Grab] = 1;",
        "",
    ]
    em = _Emitter(p, p.prob("p_emergency"))
    live = "t < LIMIT"
    cell = ["t += T_cell", "b -= B_cell"]
    home = "(abs(px) + abs(py))"
    to_ret_from_dep = "(abs(rx - DX) + abs(ry - DY))"
    to_ret_from_base = "(abs(rx) + abs(ry))"

    em.consuming("TakeOff", f"m = {M.TAKEOFF}", "1", "B_to",
                 [(1, [f"m := {M.CHECK}", "t += T_to", "b -= B_to"])], airborne=False)

    # the check also scans the launch cell
    ck = ["t += T_ck", "b -= B_ck"]
    em.consuming("Check", f"m = {M.CHECK} & {live}", "1", "B_ck", [
        ((1 - cfail) * (1 - alpha), [f"m := {M.SEARCH}"] + ck),
        ((1 - cfail) * alpha, [f"m := {M.APPROACH}", "rx := px", "ry := py"] + ck),
        (cfail, [f"m := {M.RETURN}", f"rsn := {RSN_ABORT}"] + ck),
    ])

    # search: Search and BatteryLow carry complementary threshold weights
    searching = f"m = {M.SEARCH} & {live}"
    not_last = f"!(px = {lx} & py = {ly})"
    w_search = "(b > BLOW ? 1 : 0)"
    moves = [
        ("mod(py, 2) = 0 & px < {}".format(W - 1), "px", "+ 1", ["px += 1"]),
        ("mod(py, 2) = 1 & px > 0", "px", "- 1", ["px -= 1"]),
        (f"(mod(py, 2) = 0 & px = {W - 1} | mod(py, 2) = 1 & px = 0) & {not_last}", "py", "+ 1", ["py += 1"]),
    ]
    for cond, axis, delta, upd in moves:
        nx = f"px {delta}" if axis == "px" else "px"
        ny = f"py {delta}" if axis == "py" else "py"
        em.consuming("Search", f"{searching} & b > BLOW & {cond}", w_search, "B_cell.hi", [
            (1 - alpha, upd + cell),
            (alpha, upd + [f"rx := {nx}", f"ry := {ny}", f"m := {M.APPROACH}"] + cell),
        ])
    em.command("EndSearch", f"{searching} & b > BLOW & px = {lx} & py = {ly}", w_search,
               [(1, [f"m := {M.RETURN}", f"rsn := {RSN_DONE}"])])
    em.command("BatteryLow", f"{searching} & b <= BLOW", f"1 - {w_search}",
               [(1, [f"m := {M.RETURN}", f"rsn := {RSN_RECHARGE}", "rx := px", "ry := py"])])

    em.consuming("Approach", f"m = {M.APPROACH} & {live}", "1", "B_ap.hi",
                 [(1, [f"m := {M.DESCEND}", "t += T_ap", "b -= B_ap"])])
    em.consuming("Descend", f"m = {M.DESCEND} & {live}", "1", "B_de.hi",
                 [(1, [f"m := {M.GRAB}", "t += T_de", "b -= B_de"])])
    em.consuming("Grab", f"m = {M.GRAB} & {live}", "1", "B_gr.hi", [
        (1 - gfail, [f"m := {M.ASCEND}", "carry := 1", "t += T_gr", "b -= B_gr"]),
        (gfail, ["t += T_gr", "b -= B_gr"]),
    ])
    em.consuming("Ascend", f"m = {M.ASCEND} & {live}", "1", "B_as.hi",
                 [(1, [f"m := {M.TRANSPORT}", "t += T_as", "b -= B_as"])])

    # transport: x first, then y, towards the deposit site
    moving = f"m = {M.TRANSPORT} & {live} & carry = 1"
    steps = [
        ("px > DX", ["px -= 1"]),
        ("px < DX", ["px += 1"]),
        ("px = DX & py > DY", ["py -= 1"]),
        ("px = DX & py < DY", ["py += 1"]),
    ]
    for cond, upd in steps:
        em.consuming("Transport", f"{moving} & b > BLOW & {cond}", w_search, "B_cell.hi", [
            (1 - drop, upd + cell),
            (drop, upd + cell + ["carry := 0", f"m := {M.DESCEND}"]),
        ])
    em.command("BatteryLow", f"{moving} & b <= BLOW & !(px = DX & py = DY)", f"1 - {w_search}",
               [(1, [f"m := {M.RETURN}", f"rsn := {RSN_RECHARGE}"])])
    em.consuming("Deposit", f"{moving} & px = DX & py = DY", "1", "B_dep",
                 [(1, [f"m := {M.DEPOSIT}", "carry := 0", "obj -= 1", "t += T_dep", "b -= B_dep"])])

    # after a deposit: go on searching, recharge first, or finish
    at_dep = f"m = {M.DEPOSIT} & {live}"
    em.consuming("Continue", at_dep, "(obj > 0 & b > BLOW ? 1 : 0)", f"{to_ret_from_dep} * B_cell.hi", [
        (1, [f"m := {M.SEARCH}", "px := rx", "py := ry",
             f"t += {to_ret_from_dep} * T_cell", f"b -= {to_ret_from_dep} * B_cell"]),
    ])
    em.command("GoRecharge", at_dep, "(obj > 0 & b <= BLOW ? 1 : 0.5)",
               [(1, [f"m := {M.RETURN}", f"rsn := {RSN_RECHARGE}"])])
    em.command("Finish", at_dep, "(obj > 0 ? 0.25 : 1)",
               [(1, [f"m := {M.RETURN}", f"rsn := {RSN_DONE}"])])

    em.command("TimeOut", f"m >= {M.CHECK} & m <= {M.DEPOSIT} & t >= LIMIT", "1",
               [(1, [f"m := {M.RETURN}", f"rsn := {RSN_ABORT}"])])

    # flight home; where it ends depends on why we came back
    ret_upd = ["px := 0", "py := 0", f"t += {home} * T_cell", f"b -= {home} * B_cell"]
    going = f"m = {M.RETURN}"
    em.consuming("Return", f"{going} & rsn = {RSN_DONE}", "1", f"{home} * B_cell.hi",
                 [(1, ret_upd + [f"m := {M.COMPLETE}"])])
    em.consuming("Return", f"{going} & rsn = {RSN_RECHARGE} & {live}", "1", f"{home} * B_cell.hi",
                 [(1, ret_upd + [f"m := {M.RECHARGE}"])])
    em.consuming("Return", f"{going} & (rsn = {RSN_ABORT} | rsn = {RSN_RECHARGE} & t >= LIMIT)", "1",
                 f"{home} * B_cell.hi", [(1, ret_upd + [f"m := {M.ABANDONED}"])])

    charging = f"m = {M.RECHARGE} & {live}"
    em.command("Recharge", f"{charging} & carry = 0", "1", [
        (1, [f"m := {M.SEARCH}", "px := rx", "py := ry", f"rsn := {RSN_DONE}",
             f"t += T_rech + {to_ret_from_base} * T_cell", f"b := CAP - {to_ret_from_base} * B_cell"]),
    ], airborne=True)
    em.command("Recharge", f"{charging} & carry = 1", "1", [
        (1, [f"m := {M.TRANSPORT}", f"rsn := {RSN_DONE}", "t += T_rech", "b := CAP"]),
    ])
    em.command("Abandon", f"m = {M.RECHARGE} & t >= LIMIT", "1", [(1, [f"m := {M.ABANDONED}"])])

    em.command("Done", f"m >= {M.EMERGENCY}", "1", [(1, [])])
    return "\n".join(head + em.lines) + "\n"


def desk_params(**overrides) -> ScenarioParams:
    """The small reference mission used throughout the tests."""
    return replace(ScenarioParams(), **overrides)


__all__ = [
    "Mode",
    "ScenarioParams",
    "TERMINAL_MODES",
    "desk_params",
    "generate_model",
    "last_cell",
    "search_pattern",
]

