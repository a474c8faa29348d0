"""Reachability, deadline curves and expected rewards on a built state space.

Qualitative graph precomputation pins states whose value is exactly 0 or 1;
the rest is solved by one backward sweep when it is acyclic and by Jacobi
value iteration otherwise.  A DTMC is a single-choice MDP, so
one code path serves the fixed, min and max directions.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from . import expr as ex
from .compiled import CompiledModel
from .errors import ModelError, MonotonicityViolation, NonConvergence, RewardDivergence
from .statespace import StateSpace, TerminalPartition, uniformize

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1_000_000
DIRECTIONS = ("min", "max", "fixed")


@dataclass
class ValueVector:
    values: np.ndarray
    target: str
    direction: str
    iterations: int = 0
    residual: float = 0.0
    initial: np.ndarray = field(default=None, repr=False)
    bound: int | None = None

    @property
    def value(self) -> float:
        """Value of the initial state set: min/max over initial states for
        min/max objectives, their average for fixed ones."""
        v = self.values[self.initial]
        if self.direction == "min":
            return float(v.min())
        if self.direction == "max":
            return float(v.max())
        return float(v.mean())


def _check_direction(ss, direction):
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    if direction == "fixed" and not ss.is_dtmc:
        raise ValueError("direction 'fixed' needs a DTMC (autonomous or uniform build)")


def _target_mask(ss, target):
    if isinstance(target, str):
        return target, ss.label_mask(target).copy()
    mask = np.asarray(target, dtype=bool)
    return "<mask>", mask.copy()


# ---------------------------------------------------------------- graph helpers

def _state_graph(ss) -> sp.coo_matrix:
    """State -> successor edges (any choice), deduplicated."""
    if "graph" not in ss._cache:
        rows = np.repeat(ss.choice_state, np.diff(ss.row_ptr))
        g = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, ss.targets)),
                          shape=(ss.n_states, ss.n_states))
        g.sum_duplicates()
        ss._cache["graph"] = g.tocoo()
    return ss._cache["graph"]


def _backward_reach(ss, sources, allowed):
    """States in ``allowed`` that can reach ``sources`` (plus ``sources``)
    along edges between allowed states."""
    n = ss.n_states
    if not sources.any():
        return sources.copy()
    g = _state_graph(ss)
    keep = allowed[g.row] & ~sources[g.row]
    # reversed edges succ -> pred, plus super node n -> every source
    src_ids = np.flatnonzero(sources)
    rows = np.concatenate([g.col[keep], np.full(len(src_ids), n)])
    cols = np.concatenate([g.row[keep], src_ids])
    rg = sp.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n + 1, n + 1))
    order = csgraph.breadth_first_order(rg, n, directed=True, return_predecessors=False)
    out = np.zeros(n, dtype=bool)
    out[order[order < n]] = True
    return out


def _ranges(ptr, ids):
    """Concatenated ``range(ptr[i], ptr[i+1])`` for every i in ``ids``."""
    starts = ptr[ids]
    counts = ptr[ids + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(starts, counts) + np.arange(total) - offsets


def _pred_choices(ss, states):
    ptr, choice = ss.reverse
    return np.unique(choice[_ranges(ptr, states)])


def prob0E(ss, target):
    """States where the maximal reachability probability is 0."""
    return ~_backward_reach(ss, target, np.ones(ss.n_states, dtype=bool))


def prob0A(ss, target):
    """States where the minimal reachability probability is 0 (some
    scheduler avoids the target surely).  Complement of the attractor of
    the target: states all of whose choices can hit it."""
    if ss.is_dtmc:
        return prob0E(ss, target)
    cs = ss.choice_state
    need = np.diff(ss.choice_ptr).copy()
    hit = np.zeros(ss.n_choices, dtype=bool)
    r = target.copy()
    new = np.flatnonzero(r)
    while len(new):
        ch = _pred_choices(ss, new)
        ch = ch[~hit[ch]]
        hit[ch] = True
        st, dec = np.unique(cs[ch], return_counts=True)
        need[st] -= dec
        new = st[(need[st] == 0) & ~r[st]]
        r[new] = True
    return ~r


def prob1A(ss, target, no=None):
    """States where the minimal reachability probability is 1."""
    no = prob0A(ss, target) if no is None else no
    return ~_backward_reach(ss, no, ~target)


def prob1E(ss, target):
    """States where the maximal reachability probability is 1 (greatest
    fixpoint over sets from which some choice stays inside and progresses)."""
    if ss.is_dtmc:
        return prob1A(ss, target)
    cs = ss.choice_state
    u = np.ones(ss.n_states, dtype=bool)
    while True:
        miss = (~u[ss.targets]).astype(np.int64)
        stay = np.add.reduceat(miss, ss.row_ptr[:-1]) == 0
        r = target.copy()
        new = np.flatnonzero(r)
        while len(new):
            ch = _pred_choices(ss, new)
            st = np.unique(cs[ch[stay[ch]]])
            new = st[u[st] & ~r[st]]
            r[new] = True
        if (r == u).all():
            return u
        u = r


# ---------------------------------------------------------------- value iteration

def _optimize(ss, y, states, direction):
    """Reduce per-choice values ``y`` (for the choices of ``states``) to one
    value per state."""
    if ss.is_dtmc:
        return y
    counts = np.diff(ss.choice_ptr)[states]
    ptr = np.concatenate([[0], np.cumsum(counts)[:-1]])
    red = np.minimum if direction == "min" else np.maximum
    return red.reduceat(y, ptr)


def _sub_choices(ss, states):
    counts = np.diff(ss.choice_ptr)[states]
    starts = ss.choice_ptr[states]
    idx = np.repeat(starts - np.cumsum(np.concatenate([[0], counts[:-1]])), counts) + np.arange(counts.sum())
    return idx


def _levels(ss, states):
    """Topological levels of the sub-graph on ``states`` (successors before
    predecessors), or None if it has a cycle."""
    n = ss.n_states
    pos = np.full(n, -1, dtype=np.int64)
    pos[states] = np.arange(len(states))
    idx = _sub_choices(ss, states)
    sub = ss.matrix[idx]
    owner = np.repeat(np.arange(len(states)), np.diff(ss.choice_ptr)[states])
    rows = np.repeat(owner, np.diff(sub.indptr))
    cols = pos[sub.indices]
    keep = cols >= 0
    A = sp.csr_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(len(states), len(states)))
    A.sum_duplicates()
    A.data[:] = 1.0
    pending = np.asarray(A.sum(axis=1)).ravel()
    done = np.zeros(len(states), dtype=bool)
    levels = []
    ready = pending == 0
    while ready.any():
        levels.append(np.flatnonzero(ready))
        done |= ready
        pending -= A @ ready.astype(np.float64)
        ready = (pending == 0) & ~done
    if not done.all():
        return None
    return [states[lv] for lv in levels]


def _iterate(ss, x, maybe, direction, tol, max_iter, reward=None):
    """Solve the Bellman equations on the ``maybe`` states.  An acyclic
    sub-graph is swept once in reverse topological order, which is exact;
    otherwise Jacobi iteration runs until the relative change is below tol."""
    states = np.flatnonzero(maybe)
    if len(states) == 0:
        return x, 0, 0.0
    levels = _levels(ss, states)
    if levels is not None:
        for lv in levels:
            idx = _sub_choices(ss, lv)
            y = ss.matrix[idx] @ x
            if reward is not None:
                y = y + reward[idx]
            x[lv] = _optimize(ss, y, lv, direction)
        return x, len(levels), 0.0
    idx = _sub_choices(ss, states)
    M = ss.matrix[idx]
    r = None if reward is None else reward[idx]
    it, residual = 0, np.inf
    cur = x[states]
    while it < max_iter:
        it += 1
        y = M @ x
        if r is not None:
            y = y + r
        new = _optimize(ss, y, states, direction)
        diff = np.abs(new - cur)
        scale = np.where(new != 0.0, np.abs(new), 1.0)
        residual = float((diff / scale).max())
        x[states] = new
        cur = new
        if residual < tol:
            return x, it, residual
    raise NonConvergence(it, residual)


def reach(ss: StateSpace, target, direction="fixed", tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
          workers: int = 1) -> ValueVector:
    """Probability of eventually reaching ``target`` (label name or mask)."""
    _check_direction(ss, direction)
    name, T = _target_mask(ss, target)
    if direction == "min":
        no = prob0A(ss, T)
        yes = prob1A(ss, T, no)
    else:
        no = prob0E(ss, T)
        yes = prob1E(ss, T)
    x = np.zeros(ss.n_states)
    x[yes] = 1.0
    maybe = ~(no | yes)
    x, it, res = _iterate(ss, x, maybe, direction, tol, max_iter)
    return ValueVector(x, name, direction, it, res, ss.initial)


# ---------------------------------------------------------------- rewards

@dataclass
class RewardStructure:
    """Per-choice nonnegative reward: ``expr`` evaluated in the source state,
    restricted to choices of ``action`` when one is given."""

    name: str
    expr: object
    action: str | None = None

    @classmethod
    def from_model(cls, model, name):
        for r in model.rewards:
            if r.name == name:
                return cls(r.name, r.expr, r.action)
        known = ", ".join(r.name for r in model.rewards) or "none"
        raise KeyError(f"unknown reward {name!r}; declared: {known}")

    def vector(self, ss: StateSpace) -> np.ndarray:
        fn = ex.compile_vector(self.expr, ss.model.env)
        cm = CompiledModel(ss.model)
        per_state = cm.evaluate(fn, ss.states, np.float64)
        r = per_state[ss.choice_state].copy()
        if self.action is not None:
            cmd = ss.choice_command
            actions = np.array([c.action for c in ss.model.commands] + [None], dtype=object)
            r[actions[cmd] != self.action] = 0.0
        if (r < 0).any():
            raise ModelError(f"reward {self.name} is negative on some reachable state")
        return r


def expected_reward(ss: StateSpace, reward, target="absorbing", direction="fixed", tol=DEFAULT_TOL,
                    max_iter=DEFAULT_MAX_ITER, workers: int = 1) -> ValueVector:
    """Expected reward accumulated before reaching ``target``.

    ``reward`` is a reward name declared in the model, a
    :class:`RewardStructure`, or an array with one value per choice."""
    _check_direction(ss, direction)
    if isinstance(reward, str):
        reward = RewardStructure.from_model(ss.model, reward)
    if isinstance(reward, RewardStructure):
        r, rname = None, reward.name
    else:
        r, rname = np.asarray(reward, dtype=np.float64), "<vector>"
        if r.shape != (ss.n_choices,) or (r < 0).any():
            raise ValueError("reward vector needs one nonnegative value per choice")
    name, T = _target_mask(ss, target)
    low = reach(ss, T, "min" if direction != "fixed" else "fixed", tol, max_iter)
    if not (low.values == 1.0).all():
        bad = int(np.flatnonzero(low.values < 1.0)[0])
        raise RewardDivergence(
            f"target {name} is not reached with probability 1 from state {ss.valuation(bad)!r}; "
            f"expected reward {rname} is not finite")
    if r is None:
        r = reward.vector(ss)
    x = np.zeros(ss.n_states)
    x, it, res = _iterate(ss, x, ~T, direction, tol, max_iter, reward=r)
    return ValueVector(x, name, direction, it, res, ss.initial)


# ---------------------------------------------------------------- outcomes

def outcome_summary(ss: StateSpace, partition: TerminalPartition, direction="fixed", tol=DEFAULT_TOL,
                    max_iter=DEFAULT_MAX_ITER) -> dict:
    out = {}
    for name, ids in partition.categories.items():
        mask = np.zeros(ss.n_states, dtype=bool)
        mask[ids] = True
        if not mask.any():
            out[name] = 0.0
            continue
        out[name] = reach(ss, mask, direction, tol, max_iter).value
    return out


# ---------------------------------------------------------------- deadline curves

@dataclass
class DeadlineCurve:
    target: str
    time_var: str
    points: list  # (T, min, max, uniform)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("T,min,max,uniform\n")
        for T, lo, hi, uni in self.points:
            buf.write(f"{T},{lo:.10g},{hi:.10g},{uni:.10g}\n")
        return buf.getvalue()

    @property
    def deadlines(self):
        return np.array([p[0] for p in self.points])

    def series(self, which) -> np.ndarray:
        col = {"min": 1, "max": 2, "uniform": 3}[which]
        return np.array([p[col] for p in self.points])


def check_monotone(ss: StateSpace, var):
    col = ss.column(var)
    src = np.repeat(ss.choice_state, np.diff(ss.row_ptr))
    bad = col[ss.targets] < col[src]
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise MonotonicityViolation(var, ss.valuation(int(src[k])), ss.valuation(int(ss.targets[k])))


def absorption_by_time(ss: StateSpace, target, time_var):
    """For a DTMC: ``{t: probability mass absorbed in target states with
    time_var == t}``, from the (averaged) initial distribution."""
    if not ss.is_dtmc:
        raise ValueError("absorption_by_time needs a DTMC")
    _, T = _target_mask(ss, target)
    absorbing = ss.absorbing
    live = _backward_reach(ss, absorbing, np.ones(ss.n_states, dtype=bool)) & ~absorbing
    init = np.zeros(ss.n_states)
    init[ss.initial] = 1.0 / len(ss.initial)
    P = ss.matrix
    mass = np.zeros(ss.n_states)
    mass[absorbing] = init[absorbing]
    ids = np.flatnonzero(live)
    if len(ids):
        levels = _levels(ss, ids)
        visits = np.zeros(ss.n_states)
        if levels is not None:
            # predecessors first: each level pulls its final inflow
            PT = P.T.tocsr()
            for lv in reversed(levels):
                visits[lv] = init[lv] + PT[lv] @ visits
        else:
            Q = P[ids][:, ids]
            A = (sp.identity(len(ids), format="csc") - Q.T.tocsc())
            visits[ids] = np.atleast_1d(spsolve(A, init[ids]))
        flow = P.T @ visits
        mass[absorbing] += flow[absorbing]
    col = ss.column(time_var)
    sel = T & absorbing
    times, inv = np.unique(col[sel], return_inverse=True)
    per_t = np.bincount(inv, weights=mass[sel], minlength=len(times))
    return dict(zip(times.tolist(), per_t.tolist()))


def _cumulative(by_time, deadlines):
    times = np.array(sorted(by_time), dtype=np.int64)
    mass = np.array([by_time[t] for t in times.tolist()])
    csum = np.concatenate([[0.0], np.cumsum(mass)])
    pos = np.searchsorted(times, deadlines, side="right")
    return np.minimum(csum[pos], 1.0)


def deadline_curve(ss: StateSpace, target, time_var, T_from, T_to, T_step, tol=DEFAULT_TOL,
                   max_iter=DEFAULT_MAX_ITER, uniform: StateSpace | None = None) -> DeadlineCurve:
    """Probability of reaching ``target`` with ``time_var`` ≤ T for each
    sampled deadline T in ``range(T_from, T_to + 1, T_step)``.

    For an MDP the min and max series are optimised separately per deadline
    and the uniform series comes from averaging the corner choices."""
    if T_step <= 0 or T_from > T_to:
        raise ValueError("curve range needs from <= to and step > 0")
    name, T = _target_mask(ss, target)
    check_monotone(ss, time_var)
    if (T & ~ss.absorbing).any():
        raise ModelError(f"target {name} contains non-absorbing states; deadline curves need absorbing targets")
    deadlines = np.arange(T_from, T_to + 1, T_step, dtype=np.int64)
    uni_ss = uniformize(ss) if uniform is None else uniform
    uni = _cumulative(absorption_by_time(uni_ss, T, time_var), deadlines)
    if ss.is_dtmc:
        lo = hi = uni
    else:
        col = ss.column(time_var)
        lo, hi = np.empty(len(deadlines)), np.empty(len(deadlines))
        for k, d in enumerate(deadlines):
            mask = T & (col <= d)
            lo[k] = reach(ss, mask, "min", tol, max_iter).value if mask.any() else 0.0
            hi[k] = reach(ss, mask, "max", tol, max_iter).value if mask.any() else 0.0
    points = [(int(d), float(a), float(b), float(c)) for d, a, b, c in zip(deadlines, lo, hi, uni)]
    return DeadlineCurve(name, time_var, points)
