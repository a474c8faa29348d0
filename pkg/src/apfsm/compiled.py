"""Vectorised evaluation of a model over many states at once.

States are rows of an ``int64`` matrix whose columns follow the model's
variable order.  The semantics are exactly those of :mod:`apfsm.model`; the
tests replay vectorised results against the scalar functions.
"""
from __future__ import annotations

import numpy as np

from . import expr as ex
from .errors import DomainViolation, ModelError
from .model import Model, select_command


class CompiledCommand:
    def __init__(self, model: Model, index: int):
        cmd = model.commands[index]
        env = model.env
        self.index = index
        self.command = cmd
        self.action = cmd.action
        self.guard = ex.compile_vector(cmd.guard, env)
        self.weight = ex.compile_vector(cmd.weight, env)
        self.free = model.interval_names(cmd)
        self.corners = model.corners(cmd)
        self.probabilities = [o.probability for o in cmd.outcomes]
        self.updates = [
            [(model.var_index[u.variable], u.op, ex.compile_vector(u.amount, env)) for u in o.updates]
            for o in cmd.outcomes
        ]

    @property
    def n_outcomes(self):
        return len(self.probabilities)


def _column(x, k, dtype):
    a = np.asarray(x)
    if a.ndim == 0:
        return np.full(k, a, dtype=dtype)
    return a.astype(dtype, copy=False)


class CompiledModel:
    def __init__(self, model: Model):
        self.model = model
        self.lo = np.array([v.lo for v in model.variables], dtype=np.int64)
        self.hi = np.array([v.hi for v in model.variables], dtype=np.int64)
        self.commands = [CompiledCommand(model, i) for i in range(len(model.commands))]
        groups = {}
        for c in self.commands:
            groups.setdefault(c.action, []).append(c.index)
        self.action_groups = {a: idx for a, idx in groups.items() if len(idx) > 1}
        self.labels = {lab.name: ex.compile_vector(lab.expr, model.env) for lab in model.labels}

    @staticmethod
    def columns(S):
        return [S[:, i] for i in range(S.shape[1])]

    def valuation(self, row):
        return self.model.valuation([int(x) for x in row])

    def evaluate(self, fn, S, dtype=np.float64, corner=None):
        return _column(fn(self.columns(S), corner), len(S), dtype)

    def enabled(self, S) -> np.ndarray:
        cols = self.columns(S)
        k = len(S)
        E = np.empty((k, len(self.commands)), dtype=bool)
        for c in self.commands:
            E[:, c.index] = _column(c.guard(cols), k, bool)
        return E

    def select(self, S) -> np.ndarray:
        """Index of the argmax command per row, -1 where nothing is enabled.

        Raises the same errors as :func:`apfsm.model.select_command` for the
        first offending row."""
        k = len(S)
        if not self.commands:
            return np.full(k, -1, dtype=np.int64)
        cols = self.columns(S)
        E = self.enabled(S)
        W = np.full(E.shape, -np.inf)
        bad = np.zeros(k, dtype=bool)
        for c in self.commands:
            rows = E[:, c.index]
            if not rows.any():
                continue
            w = _column(c.weight(cols), k, np.float64)
            W[rows, c.index] = w[rows]
            bad |= rows & ~((w >= 0.0) & (w <= 1.0))
        for idx in self.action_groups.values():
            bad |= E[:, idx].sum(axis=1) > 1
        multi = E.sum(axis=1) > 1
        if multi.any():
            Ws = -np.sort(-W[multi], axis=1)
            ties = ((Ws[:, 1:] == Ws[:, :-1]) & np.isfinite(Ws[:, 1:])).any(axis=1)
            bad[np.flatnonzero(multi)[ties]] = True
        if bad.any():
            row = S[np.flatnonzero(bad)[0]]
            select_command(self.model, self.valuation(row))  # raises the specific error
            raise ModelError(f"inconsistent action selection in {self.valuation(row)!r}")
        sel = W.argmax(axis=1)
        sel[~E.any(axis=1)] = -1
        return sel

    def apply(self, S, command: CompiledCommand, outcome: int, corner: dict) -> np.ndarray:
        """Successor rows for one (corner, outcome) resolution; updates are
        simultaneous and domain-checked."""
        k = len(S)
        cols = self.columns(S)
        out = S.copy()
        for vi, op, fn in command.updates[outcome]:
            x = _column(fn(cols, corner), k, np.int64)
            if op == ":=":
                new = x
            elif op == "+=":
                new = cols[vi] + x
            else:
                new = cols[vi] - x
            viol = (new < self.lo[vi]) | (new > self.hi[vi])
            if viol.any():
                r = np.flatnonzero(viol)[0]
                raise DomainViolation(self.model.variables[vi].name, int(new[r]), self.valuation(S[r]))
            out[:, vi] = new
        return out

    def label(self, name, S) -> np.ndarray:
        return self.evaluate(self.labels[name], S, bool)


class Packer:
    """Mixed-radix packing of state rows into sortable int64 keys."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.int64)
        radix = np.asarray(hi, dtype=np.int64) - self.lo + 1
        total = 1
        strides = []
        for r in radix[::-1]:
            strides.append(total)
            total *= int(r)
        if total >= 2**62:
            raise ModelError(f"state vector has {total} valuations; too wide to pack into 64 bits")
        self.strides = np.array(strides[::-1], dtype=np.int64)

    def pack(self, S) -> np.ndarray:
        return ((S - self.lo) * self.strides).sum(axis=1)
