"""Seeded path sampling on the model itself (no state space needed).

``sample_path`` walks one trace with the scalar semantics and is the
reference.  ``estimate`` runs the same semantics vectorised over batches of
paths; batch ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))`` and the
batch size is fixed, so results do not depend on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .compiled import CompiledModel
from .model import Model, apply_updates, enabled_commands, outcome_distribution, select_command
from .statespace import OUTCOME_PRIORITY

SCHEDULERS = ("uniform", "lo", "hi")
Z95 = 1.959963984540054
BATCH = 1000
DEFAULT_STEP_CAP = 100_000


def _check_scheduler(scheduler):
    if scheduler not in SCHEDULERS:
        raise ValueError(f"scheduler must be one of {SCHEDULERS}, got {scheduler!r}")


def category_order(model: Model):
    declared = [lab.name for lab in model.labels]
    order = [n for n in OUTCOME_PRIORITY if n in declared]
    return order + [n for n in declared if n not in OUTCOME_PRIORITY]


def _corner_index(scheduler, ncorner, u):
    if scheduler == "lo":
        return 0
    if scheduler == "hi":
        return ncorner - 1
    return min(int(u * ncorner), ncorner - 1)


# ---------------------------------------------------------------- single traces

@dataclass
class Step:
    action: str
    corner: dict | None
    outcome: int


@dataclass
class Trace:
    states: list
    steps: list
    category: str | None
    truncated: bool
    rewards: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    def dump(self) -> str:
        def fmt(s):
            return ",".join(f"{k}={v}" for k, v in s.items())

        lines = []
        for i, st in enumerate(self.steps):
            corner = ",".join(f"{k}={v}" for k, v in (st.corner or {}).items())
            lines.append(f"{fmt(self.states[i])} --{st.action}[{corner}]/{st.outcome}--> {fmt(self.states[i + 1])}")
        end = "truncated" if self.truncated else f"end {self.category}"
        lines.append(f"{fmt(self.final)} {end}")
        return "\n".join(lines) + "\n"


def _classify(model, s, absorbed):
    if not absorbed:
        return None
    for name in category_order(model):
        if model.scalar(model.label(name).expr)(s.values):
            return name
    return "deadlock"


def sample_path(model: Model, scheduler="uniform", seed=0, step_cap=DEFAULT_STEP_CAP) -> Trace:
    """One trace under argmax action choice; interval corners drawn
    uniformly (``uniform``) or pinned to all-lo / all-hi."""
    _check_scheduler(scheduler)
    rng = np.random.default_rng(seed)
    inits = model.initial_states()
    s = inits[int(rng.integers(len(inits)))] if len(inits) > 1 else inits[0]
    states, steps = [s], []
    rewards = {r.name: 0.0 for r in model.rewards}
    absorbed = False
    while len(steps) < step_cap:
        if not enabled_commands(model, s):
            absorbed = True
            break
        cmd = select_command(model, s)
        corners = model.corners(cmd)
        u_corner, u_out = rng.random(2)
        ci = _corner_index(scheduler, len(corners), u_corner)
        corner = corners[ci] if model.interval_names(cmd) else None
        dist = outcome_distribution(model, s, cmd.action, corner)
        if len(dist) == 1 and dist[0][1] == s:
            absorbed = all(d == [(1, s)] for d in (outcome_distribution(model, s, cmd.action, c) for c in corners))
            if absorbed:
                break
        probs = [float(o.probability) for o in cmd.outcomes]
        k = min(int(np.searchsorted(np.cumsum(probs), u_out * sum(probs), side="right")), len(probs) - 1)
        nxt = apply_updates(s, cmd.outcomes[k].updates, corner)
        for r in model.rewards:
            if r.action is None or r.action == cmd.action:
                rewards[r.name] += float(model.scalar(r.expr)(s.values))
        steps.append(Step(cmd.action, corner, k))
        states.append(nxt)
        s = nxt
    return Trace(states, steps, _classify(model, s, absorbed), not absorbed, rewards)


# ---------------------------------------------------------------- estimates

@dataclass
class Estimate:
    event: str
    n: int
    successes: int
    point: float
    lo: float
    hi: float
    seed: int
    scheduler: str = "uniform"
    truncated: int = 0

    def contains(self, p):
        return self.lo <= p <= self.hi

    def csv_row(self):
        return f"{self.event},{self.n},{self.point:.10g},{self.lo:.10g},{self.hi:.10g},{self.seed}"

    def to_csv(self):
        return "event,n,point,lo,hi,seed\n" + self.csv_row() + "\n"


def wilson(successes, n, z=Z95):
    """Wilson score interval, with the degenerate ends pinned to 0 and 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = successes / n
    z2 = z * z
    denom = 1 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    if successes == n:
        hi = 1.0
    if successes == 0:
        lo = 0.0
    return p, lo, hi


class BatchSimulator:
    """Vectorised sampler over many independent paths."""

    def __init__(self, model: Model, scheduler="uniform", step_cap=DEFAULT_STEP_CAP):
        _check_scheduler(scheduler)
        self.model = model
        self.cm = CompiledModel(model)
        self.scheduler = scheduler
        self.step_cap = step_cap
        self.init = np.array([s.values for s in model.initial_states()], dtype=np.int64)
        self.init = self.init.reshape(-1, len(model.variables))
        self.cum = [np.cumsum([float(p) for p in c.probabilities]) for c in self.cm.commands]

    def run(self, n, rng, event_fn):
        """Simulate ``n`` paths; returns (event hits, truncated flags, final
        states)."""
        cm = self.cm
        S = self.init[rng.integers(len(self.init), size=n)] if len(self.init) > 1 else np.repeat(self.init, n, 0)
        hit = event_fn(S).copy()
        active = np.ones(n, dtype=bool)
        for _ in range(self.step_cap):
            idx = np.flatnonzero(active)
            if len(idx) == 0:
                break
            F = S[idx]
            u = rng.random((len(idx), 2))
            sel = cm.select(F)
            active[idx[sel < 0]] = False
            nxt = F.copy()
            for ci in np.unique(sel[sel >= 0]):
                cc = cm.commands[ci]
                rows = np.flatnonzero(sel == ci)
                ncorner = len(cc.corners)
                if self.scheduler == "uniform":
                    kc = np.minimum((u[rows, 0] * ncorner).astype(np.int64), ncorner - 1)
                else:
                    kc = np.full(len(rows), 0 if self.scheduler == "lo" else ncorner - 1)
                cum = self.cum[ci]
                ko = np.minimum(np.searchsorted(cum, u[rows, 1] * cum[-1], side="right"), len(cum) - 1)
                for a in np.unique(kc):
                    for o in np.unique(ko[kc == a]):
                        r = rows[(kc == a) & (ko == o)]
                        nxt[r] = cm.apply(F[r], cc, o, cc.corners[a])
                same = rows[(nxt[rows] == F[rows]).all(axis=1)]
                if len(same):
                    done = self._absorbing(F[same], cc)
                    active[idx[same[done]]] = False
            S[idx] = nxt
            hit[idx] |= event_fn(nxt)
        return hit, active, S

    def _absorbing(self, F, cc):
        ok = np.ones(len(F), dtype=bool)
        for corner in cc.corners:
            for o in range(cc.n_outcomes):
                ok &= (self.cm.apply(F, cc, o, corner) == F).all(axis=1)
        return ok


def _run_batch(args):
    model, scheduler, event, seed, index, size, step_cap = args
    sim = BatchSimulator(model, scheduler, step_cap)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    fn = sim.cm.labels[event]
    hit, truncated, _ = sim.run(size, rng, lambda S: sim.cm.evaluate(fn, S, bool))
    return int((hit & ~truncated).sum()), int(truncated.sum())


def estimate(model: Model, event: str, n: int, seed: int = 0, scheduler="uniform", *,
             step_cap=DEFAULT_STEP_CAP, workers: int = 1) -> Estimate:
    """Fraction of ``n`` sampled paths that reach a state labelled ``event``.

    Truncated paths count as misses and are reported separately."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_scheduler(scheduler)
    if event not in {lab.name for lab in model.labels}:
        raise KeyError(f"unknown label {event!r}")
    sizes = [min(BATCH, n - i) for i in range(0, n, BATCH)]
    jobs = [(model, scheduler, event, seed, i, k, step_cap) for i, k in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch, jobs))
    else:
        results = [_run_batch(j) for j in jobs]
    hits = sum(h for h, _ in results)
    truncated = sum(t for _, t in results)
    point, lo, hi = wilson(hits, n)
    return Estimate(event, n, hits, point, lo, hi, seed, scheduler, truncated)
