"""Explicit state-space construction.

Breadth-first closure from the initial states.  Each frontier level is
expanded in bulk with numpy; successors are ordered by (source id, choice,
outcome in source order) before new ids are handed out, which reproduces the
id assignment of a plain FIFO exploration.

Three build modes:

``autonomous``
    argmax action per state, one distribution per state (a DTMC).  A selected
    command that mentions a non-degenerate interval constant is an error.
``interval``
    argmax action, then one choice per lo/hi corner of the interval constants
    the command uses (an MDP).
``uniform``
    as ``interval`` but the corners are averaged with equal weight (a DTMC).
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .compiled import CompiledModel, Packer
from .errors import CornerRequired, ModelError, StateBudgetExceeded, UnlabeledTerminal
from .model import Model

DEFAULT_STATE_BUDGET = 50_000_000
ROW_SUM_EPS = 1e-9
OUTCOME_PRIORITY = ("success", "emergency", "timeout", "missed")


class BuildMode(str, Enum):
    AUTONOMOUS = "autonomous"
    INTERVAL = "interval"
    UNIFORM = "uniform"


def state_budget():
    return int(float(os.environ.get("APFSM_STATE_BUDGET", DEFAULT_STATE_BUDGET)))


@dataclass
class BuildStats:
    states: int
    choices: int
    transitions: int
    levels: int
    seconds: float


@dataclass
class StateSpace:
    """Sparse transition system.

    Choices of state ``i`` are ``choice_ptr[i]:choice_ptr[i+1]``; entries of
    choice ``j`` are ``row_ptr[j]:row_ptr[j+1]`` into ``targets``/``probs``.
    """

    model: Model
    mode: BuildMode
    states: np.ndarray
    initial: np.ndarray
    choice_ptr: np.ndarray
    row_ptr: np.ndarray
    targets: np.ndarray
    probs: np.ndarray
    choice_command: np.ndarray
    choice_corner: np.ndarray
    labels: dict
    stats: BuildStats
    _keys: np.ndarray = field(repr=False, default=None)
    _key_ids: np.ndarray = field(repr=False, default=None)
    _packer: Packer = field(repr=False, default=None)
    _matrix: sp.csr_matrix = field(repr=False, default=None)
    _cache: dict = field(repr=False, default_factory=dict)

    @property
    def n_states(self):
        return len(self.states)

    @property
    def n_choices(self):
        return len(self.row_ptr) - 1

    @property
    def var_names(self):
        return self.model.var_names if self.model is not None else ("state",)

    @property
    def is_dtmc(self):
        return self.n_choices == self.n_states

    @property
    def choice_state(self) -> np.ndarray:
        if "choice_state" not in self._cache:
            self._cache["choice_state"] = np.repeat(np.arange(self.n_states), np.diff(self.choice_ptr))
        return self._cache["choice_state"]

    @property
    def reverse(self):
        """``(ptr, choice)``: the choices with a transition into state ``j``
        are ``choice[ptr[j]:ptr[j+1]]``."""
        if "reverse" not in self._cache:
            trans_choice = np.repeat(np.arange(self.n_choices), np.diff(self.row_ptr))
            order = np.argsort(self.targets, kind="stable")
            ptr = np.concatenate([[0], np.cumsum(np.bincount(self.targets, minlength=self.n_states))])
            self._cache["reverse"] = (ptr, trans_choice[order])
        return self._cache["reverse"]

    @property
    def matrix(self) -> sp.csr_matrix:
        """Choices x states probability matrix."""
        if self._matrix is None:
            self._matrix = sp.csr_matrix(
                (self.probs, self.targets, self.row_ptr), shape=(self.n_choices, self.n_states)
            )
        return self._matrix

    @property
    def absorbing(self) -> np.ndarray:
        return self.labels["absorbing"]

    def label_mask(self, name) -> np.ndarray:
        if isinstance(name, np.ndarray):
            return name.astype(bool)
        try:
            return self.labels[name]
        except KeyError:
            raise KeyError(f"unknown label {name!r}; known: {', '.join(self.labels)}") from None

    def column(self, var) -> np.ndarray:
        return self.states[:, list(self.var_names).index(var)]

    def valuation(self, i):
        if self.model is None:
            return {"state": int(i)}
        return self.model.valuation([int(x) for x in self.states[i]])

    def state_id(self, valuation) -> int:
        row = np.array([[valuation[n] for n in self.var_names]], dtype=np.int64)
        key = self._packer.pack(row)[0]
        pos = np.searchsorted(self._keys, key)
        if pos < len(self._keys) and self._keys[pos] == key:
            return int(self._key_ids[pos])
        raise KeyError(f"{valuation!r} is not reachable")

    def choices(self, i):
        """``[(command index, corner index, [(target, prob), ...]), ...]``."""
        out = []
        for j in range(self.choice_ptr[i], self.choice_ptr[i + 1]):
            lo, hi = self.row_ptr[j], self.row_ptr[j + 1]
            out.append((int(self.choice_command[j]), int(self.choice_corner[j]),
                        list(zip(self.targets[lo:hi].tolist(), self.probs[lo:hi].tolist()))))
        return out

    def dump(self) -> str:
        """Plain-text listing (``apfsm-ss v1``)."""
        names = self.var_names
        label_names = list(self.labels)
        lines = ["apfsm-ss v1"]
        for i in range(self.n_states):
            vals = ",".join(f"{n}={int(x)}" for n, x in zip(names, self.states[i]))
            labs = ",".join(n for n in label_names if self.labels[n][i])
            lines.append(f"state {i} {vals} [{labs}]")
        for i in range(self.n_states):
            for c, j in enumerate(range(self.choice_ptr[i], self.choice_ptr[i + 1])):
                lo, hi = self.row_ptr[j], self.row_ptr[j + 1]
                entries = " ".join(f"{int(t)}:{float(p)!r}" for t, p in zip(self.targets[lo:hi], self.probs[lo:hi]))
                lines.append(f"row {i} {c} {entries}")
        return "\n".join(lines) + "\n"


def _merge_duplicates(rowkey, key, ordinal, prob):
    """Sum probabilities of equal (row, successor) pairs; keep first ordinal."""
    order = np.lexsort((ordinal, key, rowkey))
    rk, k, o, p = rowkey[order], key[order], ordinal[order], prob[order]
    start = np.ones(len(rk), dtype=bool)
    start[1:] = (rk[1:] != rk[:-1]) | (k[1:] != k[:-1])
    if start.all():
        return None
    idx = np.flatnonzero(start)
    psum = np.add.reduceat(p, idx)
    keep = order[idx]
    regroup = np.lexsort((o[idx], rk[idx]))
    return keep[regroup], psum[regroup]


def build(model: Model, mode: BuildMode | str = BuildMode.AUTONOMOUS, *, budget: int | None = None,
          workers: int = 1) -> StateSpace:
    """Reachable state space of ``model`` under ``mode``.

    ``workers`` is accepted for interface compatibility; expansion is
    vectorised in a single process, so ids are always canonical.
    """
    mode = BuildMode(mode)
    budget = state_budget() if budget is None else budget
    t0 = time.perf_counter()
    cm = CompiledModel(model)
    packer = Packer(cm.lo, cm.hi)

    init_rows = np.array([s.values for s in model.initial_states()], dtype=np.int64)
    init_rows = init_rows.reshape(-1, len(model.variables))
    if len(init_rows) == 0:
        raise ModelError("model has no initial state")
    init_keys = packer.pack(init_rows)
    _, first = np.unique(init_keys, return_index=True)
    first.sort()
    init_rows, init_keys = init_rows[first], init_keys[first]
    n = len(init_rows)
    if n > budget:
        raise StateBudgetExceeded(budget)
    korder = np.argsort(init_keys)
    known_keys, known_ids = init_keys[korder], np.arange(n, dtype=np.int64)[korder]

    blocks = [init_rows]
    recs = {k: [] for k in ("src", "choice", "target", "prob", "cmd", "corner")}
    start, levels = 0, 0
    frontier = init_rows
    while len(frontier):
        levels += 1
        sel = cm.select(frontier)
        parts = []
        dead = np.flatnonzero(sel < 0)
        if len(dead):
            parts.append((start + dead, 0, 0, 1.0, frontier[dead], -1, -1))
        for ci in np.unique(sel[sel >= 0]):
            cc = cm.commands[ci]
            rows = np.flatnonzero(sel == ci)
            F = frontier[rows]
            src = start + rows
            if cc.free and mode is BuildMode.AUTONOMOUS:
                raise CornerRequired(cc.action, cc.free, cm.valuation(F[0]))
            ncorner = len(cc.corners)
            for ki, corner in enumerate(cc.corners):
                for oi, p in enumerate(cc.probabilities):
                    succ = cm.apply(F, cc, oi, corner)
                    if mode is BuildMode.UNIFORM:
                        parts.append((src, 0, ki * cc.n_outcomes + oi, float(p) / ncorner, succ, ci, -1))
                    else:
                        parts.append((src, ki, oi, float(p), succ, ci, ki if cc.free else -1))

        m = [len(p[0]) for p in parts]
        src = np.concatenate([p[0] for p in parts])
        choice = np.concatenate([np.full(k, p[1], dtype=np.int64) for k, p in zip(m, parts)])
        ordinal = np.concatenate([np.full(k, p[2], dtype=np.int64) for k, p in zip(m, parts)])
        prob = np.concatenate([np.full(k, p[3]) for k, p in zip(m, parts)])
        succ = np.concatenate([p[4] for p in parts])
        cmd = np.concatenate([np.full(k, p[5], dtype=np.int64) for k, p in zip(m, parts)])
        corner = np.concatenate([np.full(k, p[6], dtype=np.int64) for k, p in zip(m, parts)])

        order = np.lexsort((ordinal, choice, src))
        src, choice, ordinal, prob, succ, cmd, corner = (
            a[order] for a in (src, choice, ordinal, prob, succ, cmd, corner))
        keys = packer.pack(succ)
        merged = _merge_duplicates(src * 256 + choice, keys, ordinal, prob)
        if merged is not None:
            keep, psum = merged
            src, choice, succ, cmd, corner, keys = (a[keep] for a in (src, choice, succ, cmd, corner, keys))
            prob = psum

        pos = np.searchsorted(known_keys, keys)
        pos_c = np.minimum(pos, len(known_keys) - 1)
        found = known_keys[pos_c] == keys
        target = np.empty(len(keys), dtype=np.int64)
        target[found] = known_ids[pos_c[found]]
        new_mask = ~found
        next_id = n
        if new_mask.any():
            nk = keys[new_mask]
            uniq, first_idx, inv = np.unique(nk, return_index=True, return_inverse=True)
            rank = np.argsort(first_idx, kind="stable")
            ids = np.empty(len(uniq), dtype=np.int64)
            ids[rank] = n + np.arange(len(uniq))
            target[new_mask] = ids[inv.ravel()]
            new_rows = succ[new_mask][first_idx[rank]]
            n += len(uniq)
            if n > budget:
                raise StateBudgetExceeded(budget)
            ins = np.searchsorted(known_keys, uniq)
            known_keys = np.insert(known_keys, ins, uniq)
            known_ids = np.insert(known_ids, ins, ids)
            blocks.append(new_rows)
        else:
            new_rows = succ[:0]

        recs["src"].append(src)
        recs["choice"].append(choice)
        recs["target"].append(target)
        recs["prob"].append(prob)
        recs["cmd"].append(cmd)
        recs["corner"].append(corner)
        start = next_id
        frontier = new_rows

    states = np.concatenate(blocks)
    src = np.concatenate(recs["src"])
    choice = np.concatenate(recs["choice"])
    targets = np.concatenate(recs["target"])
    probs = np.concatenate(recs["prob"])
    cmd = np.concatenate(recs["cmd"])
    corner = np.concatenate(recs["corner"])

    row_start = np.ones(len(src), dtype=bool)
    row_start[1:] = (src[1:] != src[:-1]) | (choice[1:] != choice[:-1])
    first = np.flatnonzero(row_start)
    row_ptr = np.append(first, len(src)).astype(np.int64)
    choice_src = src[first]
    counts = np.bincount(choice_src, minlength=len(states))
    choice_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    row_len = np.diff(row_ptr)
    self_loop = (row_len == 1) & (targets[first] == choice_src)
    probs[first[self_loop]] = 1.0
    absorbing = np.minimum.reduceat(self_loop, choice_ptr[:-1]).astype(bool)

    sums = np.add.reduceat(probs, first)
    worst = np.abs(sums - 1.0).max(initial=0.0)
    if worst > ROW_SUM_EPS:
        raise ModelError(f"transition row sums deviate from 1 by {worst:.3e}")

    labels = {name: cm.label(name, states) for name in cm.labels}
    labels["deadlock"] = np.zeros(len(states), dtype=bool)
    labels["deadlock"][choice_src[cmd[first] < 0]] = True
    labels["absorbing"] = absorbing

    elapsed = time.perf_counter() - t0
    ss = StateSpace(
        model=model,
        mode=mode,
        states=states,
        initial=np.arange(len(init_rows), dtype=np.int64),
        choice_ptr=choice_ptr,
        row_ptr=row_ptr,
        targets=targets,
        probs=probs,
        choice_command=cmd[first],
        choice_corner=corner[first],
        labels=labels,
        stats=BuildStats(len(states), len(first), len(targets), levels, elapsed),
        _keys=known_keys,
        _key_ids=known_ids,
        _packer=packer,
    )
    return ss


def uniformize(ss: StateSpace) -> StateSpace:
    """Average the choices of every state with equal weight (the uniform
    resolution of interval non-determinism) on the same state table."""
    if ss.is_dtmc:
        return ss
    cs = ss.choice_state
    nchoice = np.diff(ss.choice_ptr)[cs]
    M = sp.diags(1.0 / nchoice) @ ss.matrix
    owner = sp.csr_matrix((np.ones(ss.n_choices), (cs, np.arange(ss.n_choices))),
                          shape=(ss.n_states, ss.n_choices))
    P = (owner @ M).tocsr()
    P.sort_indices()
    first_cmd = ss.choice_command[ss.choice_ptr[:-1]]
    return StateSpace(
        model=ss.model,
        mode=BuildMode.UNIFORM,
        states=ss.states,
        initial=ss.initial,
        choice_ptr=np.arange(ss.n_states + 1, dtype=np.int64),
        row_ptr=P.indptr.astype(np.int64),
        targets=P.indices.astype(np.int64),
        probs=P.data,
        choice_command=first_cmd,
        choice_corner=np.full(ss.n_states, -1, dtype=np.int64),
        labels=ss.labels,
        stats=BuildStats(ss.n_states, ss.n_states, P.nnz, ss.stats.levels, 0.0),
        _keys=ss._keys,
        _key_ids=ss._key_ids,
        _packer=ss._packer,
    )


@dataclass
class TerminalPartition:
    categories: dict  # name -> sorted array of state ids

    def category_of(self, i) -> str:
        for name, ids in self.categories.items():
            pos = np.searchsorted(ids, i)
            if pos < len(ids) and ids[pos] == i:
                return name
        raise KeyError(i)


def classify_terminals(ss: StateSpace, model: Model | None = None) -> TerminalPartition:
    """Assign every absorbing state to one outcome category.

    Priority: success, emergency, timeout, missed, any other declared label
    (declaration order), then ``deadlock``."""
    model = model or ss.model
    declared = [lab.name for lab in model.labels]
    order = [n for n in OUTCOME_PRIORITY if n in declared]
    order += [n for n in declared if n not in OUTCOME_PRIORITY]
    order.append("deadlock")
    remaining = ss.absorbing.copy()
    categories = {}
    for name in order:
        hit = remaining & ss.labels[name]
        remaining &= ~hit
        if hit.any() or name in OUTCOME_PRIORITY:
            categories[name] = np.flatnonzero(hit)
    if remaining.any():
        raise UnlabeledTerminal(ss.valuation(int(np.flatnonzero(remaining)[0])))
    return TerminalPartition(categories)


def explicit(choices, labels=None, initial=(0,)) -> StateSpace:
    """State space given directly: ``choices[i]`` is a list of rows, each a
    ``{target: probability}`` mapping.  States without choices become
    deadlocked self-loops.  Handy for analysis on hand-made chains."""
    n = len(choices)
    row_ptr, targets, probs, choice_ptr = [0], [], [], [0]
    dead = np.zeros(n, dtype=bool)
    for i, rows in enumerate(choices):
        if not rows:
            rows = [{i: 1.0}]
            dead[i] = True
        for row in rows:
            for t in sorted(row):
                targets.append(t)
                probs.append(float(row[t]))
            row_ptr.append(len(targets))
        choice_ptr.append(choice_ptr[-1] + len(rows))
    targets = np.array(targets, dtype=np.int64)
    probs = np.array(probs)
    row_ptr = np.array(row_ptr, dtype=np.int64)
    choice_ptr = np.array(choice_ptr, dtype=np.int64)
    first = row_ptr[:-1]
    choice_src = np.repeat(np.arange(n), np.diff(choice_ptr))
    self_loop = (np.diff(row_ptr) == 1) & (targets[first] == choice_src)
    absorbing = np.minimum.reduceat(self_loop, choice_ptr[:-1]).astype(bool)
    sums = np.add.reduceat(probs, first)
    if np.abs(sums - 1.0).max(initial=0.0) > ROW_SUM_EPS:
        raise ModelError("transition rows must sum to 1")
    lab = {}
    for name, ids in (labels or {}).items():
        mask = np.zeros(n, dtype=bool)
        mask[list(ids)] = True
        lab[name] = mask
    lab["deadlock"] = dead
    lab["absorbing"] = absorbing
    nchoice = len(row_ptr) - 1
    return StateSpace(
        model=None,
        mode=BuildMode.INTERVAL if nchoice > n else BuildMode.AUTONOMOUS,
        states=np.arange(n, dtype=np.int64).reshape(n, 1),
        initial=np.asarray(initial, dtype=np.int64),
        choice_ptr=choice_ptr,
        row_ptr=row_ptr,
        targets=targets,
        probs=probs,
        choice_command=np.full(nchoice, -1, dtype=np.int64),
        choice_corner=np.full(nchoice, -1, dtype=np.int64),
        labels=lab,
        stats=BuildStats(n, nchoice, len(targets), 0, 0.0),
    )
