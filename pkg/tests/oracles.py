"""Reference computations for the tests.

Nothing here touches the state-space builder or the numerical engine.  The
model oracles walk the scalar model semantics with exact fractions; the
matrix oracles use dense linear algebra, linear programming and exhaustive
scheduler enumeration.
"""
from __future__ import annotations

import itertools
import sys
from collections import deque
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from apfsm.model import apply_updates, enabled_commands, select_command

PRIORITY = ("success", "emergency", "timeout", "missed")


# ---------------------------------------------------------------- model oracles

def resolved_successors(model, s, corners="none"):
    """``[(probability, command, successor)]`` for the argmax command at
    ``s``; ``corners='uniform'`` averages every lo/hi corner, ``'none'``
    requires the command to use fixed constants only."""
    cmd = select_command(model, s)
    names = model.interval_names(cmd)
    if names and corners == "none":
        raise ValueError(f"{cmd.action} needs an interval corner")
    cs = model.corners(cmd) if names else [None]
    w = Fraction(1, len(cs))
    return [(w * o.probability, cmd, apply_updates(s, o.updates, c)) for c in cs for o in cmd.outcomes]


def is_absorbing(model, s, corners="none"):
    if not enabled_commands(model, s):
        return True
    return all(t == s for _, _, t in resolved_successors(model, s, corners))


def category(model, s):
    holds = {lab.name for lab in model.labels if model.scalar(lab.expr)(s.values)}
    declared = [lab.name for lab in model.labels]
    for name in [n for n in PRIORITY if n in declared] + [n for n in declared if n not in PRIORITY]:
        if name in holds:
            return name
    return "deadlock"


class PathOracle:
    """Sum over all paths of the (acyclic) model, memoised per state.

    ``dist(s)`` maps (category, time value) of the absorbing end state to
    its exact probability; ``reward(s, name)`` is the expected accumulated
    reward."""

    def __init__(self, model, corners="none", time_var="t"):
        self.model = model
        self.corners = corners
        self.time_var = time_var
        self._dist = {}
        self._rew = {}
        sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))

    def dist(self, s):
        if s in self._dist:
            return self._dist[s]
        m = self.model
        if is_absorbing(m, s, self.corners):
            out = {(category(m, s), s[self.time_var] if self.time_var else 0): Fraction(1)}
        else:
            out = {}
            for p, _, t in resolved_successors(m, s, self.corners):
                for k, q in self.dist(t).items():
                    out[k] = out.get(k, 0) + p * q
        self._dist[s] = out
        return out

    def reward(self, s, name):
        key = (s, name)
        if key in self._rew:
            return self._rew[key]
        m = self.model
        if is_absorbing(m, s, self.corners):
            val = 0.0
        else:
            r = next(x for x in m.rewards if x.name == name)
            val = 0.0
            for p, cmd, t in resolved_successors(m, s, self.corners):
                here = float(m.scalar(r.expr)(s.values)) if r.action in (None, cmd.action) else 0.0
                val += float(p) * (here + self.reward(t, name))
        self._rew[key] = val
        return val

    def initial(self):
        inits = self.model.initial_states()
        assert len(inits) == 1
        return inits[0]

    def categories(self):
        out = {}
        for (cat, _), p in self.dist(self.initial()).items():
            out[cat] = out.get(cat, 0) + p
        return out

    def by_time(self, cat):
        out = {}
        for (c, t), p in self.dist(self.initial()).items():
            if c == cat:
                out[t] = out.get(t, 0) + p
        return dict(sorted(out.items()))

    def curve(self, cat, deadlines):
        bt = self.by_time(cat)
        return [sum((p for t, p in bt.items() if t <= d), Fraction(0)) for d in deadlines]


def enumerate_paths(model, corners="none", time_var="t", limit=10**6):
    """Literal depth-first enumeration of every complete path:
    ``[(probability, category, time)]``.  Raises if there are more than
    ``limit`` paths."""
    out = []
    stack = [(model.initial_states()[0], Fraction(1))]
    while stack:
        s, p = stack.pop()
        if is_absorbing(model, s, corners):
            out.append((p, category(model, s), s[time_var]))
            if len(out) > limit:
                raise RuntimeError("too many paths")
            continue
        for q, _, t in resolved_successors(model, s, corners):
            stack.append((t, p * q))
    return out


def fifo_exploration(model, corners="none"):
    """Reachable valuations in FIFO discovery order (outcomes in source
    order, corners in lexicographic lo/hi order)."""
    inits = model.initial_states()
    ids = {s: i for i, s in enumerate(inits)}
    order = list(inits)
    queue = deque(inits)
    while queue:
        s = queue.popleft()
        if not enabled_commands(model, s):
            continue
        cmd = select_command(model, s)
        cs = model.corners(cmd) if model.interval_names(cmd) else [None]
        for c in cs:
            for o in cmd.outcomes:
                t = apply_updates(s, o.updates, c)
                if t not in ids:
                    ids[t] = len(order)
                    order.append(t)
                    queue.append(t)
    return order


# ---------------------------------------------------------------- matrix oracles

def random_dtmc(rng, n, n_targets=3, max_support=4):
    """Row-stochastic ``n x n`` matrix with the last ``n_targets`` states
    absorbing plus one absorbing trap; supports are sparse and random."""
    P = np.zeros((n, n))
    absorbing = list(range(n - n_targets - 1, n))
    for i in range(n):
        if i in absorbing:
            P[i, i] = 1.0
            continue
        k = rng.integers(1, max_support + 1)
        succ = rng.choice(n, size=k, replace=False)
        P[i, succ] = rng.dirichlet(np.ones(k))
    targets = absorbing[1:]
    return P, targets


def dense_reach(P, targets):
    """Reachability in a DTMC by graph precomputation plus a dense solve."""
    n = len(P)
    T = np.zeros(n, dtype=bool)
    T[list(targets)] = True
    can = T.copy()
    while True:
        nxt = can | ((P > 0) @ can.astype(int) > 0)
        if (nxt == can).all():
            break
        can = nxt
    x = np.zeros(n)
    x[T] = 1.0
    m = can & ~T
    idx = np.flatnonzero(m)
    A = np.eye(len(idx)) - P[np.ix_(idx, idx)]
    b = P[np.ix_(idx, np.flatnonzero(T))].sum(axis=1)
    x[idx] = np.linalg.solve(A, b)
    return x


def dense_reward(P, r, targets):
    """Expected reward before absorption in targets: solve x = r + P x."""
    n = len(P)
    T = np.zeros(n, dtype=bool)
    T[list(targets)] = True
    idx = np.flatnonzero(~T)
    A = np.eye(len(idx)) - P[np.ix_(idx, idx)]
    x = np.zeros(n)
    x[idx] = np.linalg.solve(A, np.asarray(r, dtype=float)[idx])
    return x


def random_mdp(rng, n, choices=3, multi=None, n_targets=2, max_support=4):
    """``mdp[s][a]`` is a probability vector of length n.  The last
    ``n_targets`` states are targets and the one before is a trap, all
    absorbing.  ``multi`` limits how many states get more than one
    choice."""
    absorbing = set(range(n - n_targets - 1, n))
    pool = [s for s in range(n) if s not in absorbing]
    chooser = set(pool) if multi is None else set(rng.choice(pool, size=min(multi, len(pool)), replace=False).tolist())
    mdp = []
    for s in range(n):
        if s in absorbing:
            row = np.zeros(n)
            row[s] = 1.0
            mdp.append([row])
            continue
        acts = []
        for _ in range(choices if s in chooser else 1):
            k = rng.integers(1, max_support + 1)
            succ = rng.choice(n, size=k, replace=False)
            row = np.zeros(n)
            row[succ] = rng.dirichlet(np.ones(k))
            acts.append(row)
        mdp.append(acts)
    targets = list(range(n - n_targets, n))
    return mdp, targets


def mdp_to_choices(mdp):
    return [[{int(j): float(p) for j, p in enumerate(row) if p > 0} for row in acts] for acts in mdp]


def _prob0(mdp, targets, direction):
    n = len(mdp)
    r = np.zeros(n, dtype=bool)
    r[targets] = True
    while True:
        nxt = r.copy()
        for s in range(n):
            if r[s]:
                continue
            hits = [bool((row[r] > 0).any()) for row in mdp[s]]
            if (all(hits) if direction == "min" else any(hits)):
                nxt[s] = True
        if (nxt == r).all():
            return ~r
        r = nxt


def exhaustive_mdp(mdp, targets, direction):
    """Optimise over every memoryless deterministic scheduler: solve the
    induced DTMC for each and take the pointwise min or max."""
    n = len(mdp)
    multi = [s for s in range(n) if len(mdp[s]) > 1]
    combos = np.array(list(itertools.product(*[range(len(mdp[s])) for s in multi])), dtype=np.int64)
    k = len(combos) if len(multi) else 1
    base = np.array([mdp[s][0] for s in range(n)])
    P = np.repeat(base[None], k, axis=0)
    for j, s in enumerate(multi):
        rows = np.array(mdp[s])
        P[:, s, :] = rows[combos[:, j]]
    T = np.zeros(n, dtype=bool)
    T[targets] = True
    can = np.repeat(T[None], k, axis=0)
    while True:
        nxt = can | (np.einsum("kij,kj->ki", (P > 0).astype(np.int8), can.astype(np.int8)) > 0)
        if (nxt == can).all():
            break
        can = nxt
    # x = P x on live states; targets pinned to 1 and hopeless states to 0
    A = np.repeat(np.eye(n)[None], k, axis=0) - P
    b = np.zeros((k, n))
    fixed = ~can | T[None]
    A[fixed] = 0.0
    for kk, s in zip(*np.nonzero(fixed)):
        A[kk, s, s] = 1.0
    b[:, T] = 1.0
    x = np.linalg.solve(A, b[..., None])[..., 0]
    return x.min(axis=0) if direction == "min" else x.max(axis=0)


def lp_mdp(mdp, targets, direction):
    """Optimal reachability as a linear programme (HiGHS)."""
    n = len(mdp)
    T = np.zeros(n, dtype=bool)
    T[targets] = True
    zero = _prob0(mdp, targets, direction)
    fixed = T | zero
    var = np.flatnonzero(~fixed)
    pos = {s: i for i, s in enumerate(var)}
    A, b = [], []
    for s in var:
        for row in mdp[s]:
            # max: x_s >= sum P x   ->  sum P_var x_var - x_s <= -P_T
            # min: x_s <= sum P x   ->  x_s - sum P_var x_var <= P_T
            coef = np.zeros(len(var))
            for j, p in enumerate(row):
                if p > 0 and j in pos:
                    coef[pos[j]] += p
            coef[pos[s]] -= 1.0
            pt = row[T].sum()
            if direction == "max":
                A.append(coef)
                b.append(-pt)
            else:
                A.append(-coef)
                b.append(pt)
    x = np.zeros(n)
    x[T] = 1.0
    if len(var):
        c = np.ones(len(var)) if direction == "max" else -np.ones(len(var))
        res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=[(0, 1)] * len(var), method="highs",
                      options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
        assert res.status == 0, res.message
        x[var] = res.x
    return x
