"""Small kinematic/energy simulations of the abstract actions.

Each action is integrated with fixed Euler steps for a batch of trials at
once.  Motion is at constant speed, the settle phase after an approach has a
Gaussian duration truncated at zero, and power draw is piecewise constant per
phase.  Times come out as ``steps * dt`` so that noise-free runs are exact.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import truncnorm

from .errors import AnalysisError

ACTIONS = ("approach", "search", "descend", "grab", "ascend", "transport")


class SimulationDiverged(AnalysisError):
    """The settle phase ran far beyond the nominal action time."""


@dataclass(frozen=True)
class MicroParams:
    speed: float = 1.0  # cruise speed, m/s
    cell: float = 1.0  # cell side, m
    approach_offset: float = 3.0  # distance to an observed object, m
    settle_mean: float = 0.0  # s
    settle_std: float = 0.3  # s
    vertical_speed: float = 0.5  # m/s
    search_height: float = 2.0  # m
    transport_height: float = 2.0  # m
    grab_height: float = 0.5  # m
    power_cruise: float = 0.7  # charge/s
    power_hover: float = 0.5
    power_vertical: float = 1.0
    grab_duration: float = 1.0  # s
    position_std: float = 0.05  # lateral error when grabbing, m
    grab_tolerance: float = 0.1  # m
    detection_radius: float = 0.35  # m
    sensor_p: float = 0.9  # detection probability inside the radius
    drop_rate: float = 0.05  # drops per second of transport
    dt: float = 0.01
    trials: int = 200
    seed: int = 0

    POSITIVE = ("speed", "cell", "vertical_speed", "search_height", "transport_height", "grab_height",
                "power_cruise", "power_hover", "power_vertical", "grab_duration", "grab_tolerance",
                "detection_radius", "dt")
    NONNEGATIVE = ("approach_offset", "settle_std", "position_std", "drop_rate")

    def __post_init__(self):
        errs = [f"{n} must be > 0" for n in self.POSITIVE if not getattr(self, n) > 0]
        errs += [f"{n} must be >= 0" for n in self.NONNEGATIVE if not getattr(self, n) >= 0]
        if self.dt > 0.1:
            errs.append("integration step dt must be <= 0.1 s")
        if not 0 <= self.sensor_p <= 1:
            errs.append("sensor_p must lie in [0,1]")
        if self.grab_height > min(self.search_height, self.transport_height):
            errs.append("grab height must not exceed the flight heights")
        if self.trials < 1:
            errs.append("trials must be >= 1")
        if errs:
            raise ValueError("invalid micro-simulation parameters: " + "; ".join(errs))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown micro-simulation parameter(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self):
        return asdict(self)


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _travel_steps(distance, speed, dt):
    """Euler-integrate constant-speed travel over ``distance`` (array, m);
    returns the number of steps each trial needed."""
    distance = np.asarray(distance, dtype=np.float64)
    x = np.zeros_like(distance)
    steps = np.zeros(distance.shape, dtype=np.int64)
    eps = 1e-9 * max(1.0, float(distance.max(initial=0.0)))
    active = distance > eps
    while active.any():
        x[active] = np.minimum(x[active] + speed * dt, distance[active])
        steps[active] += 1
        active = x < distance - eps
    return steps


def settle_times(p: MicroParams, n, rng):
    """Settle durations: Gaussian truncated at zero (half-normal for a zero
    mean)."""
    if p.settle_std == 0:
        return np.full(n, max(p.settle_mean, 0.0))
    a = (0.0 - p.settle_mean) / p.settle_std
    return truncnorm.rvs(a, np.inf, loc=p.settle_mean, scale=p.settle_std, size=n, random_state=rng)


def settle_mean(p: MicroParams):
    """Closed-form mean of the settle law."""
    if p.settle_std == 0:
        return max(p.settle_mean, 0.0)
    a = -p.settle_mean / p.settle_std
    return float(truncnorm.mean(a, np.inf, loc=p.settle_mean, scale=p.settle_std))


def _settle_steps(p, settle, nominal):
    limit = 10.0 * max(nominal, 1.0)
    if (settle > limit).any():
        worst = float(settle.max())
        raise SimulationDiverged(f"settle time {worst:.3f} s exceeds 10x the nominal action time ({limit:.3f} s)")
    return np.rint(settle / p.dt).astype(np.int64)


def approach_batch(p: MicroParams, offsets, rng):
    """(time, battery) arrays for approaches over the given offsets."""
    offsets = np.asarray(offsets, dtype=np.float64)
    if (offsets < 0).any():
        raise ValueError("approach offset must be >= 0")
    travel = _travel_steps(offsets, p.speed, p.dt)
    nominal = float(offsets.max(initial=0.0)) / p.speed
    settle = _settle_steps(p, settle_times(p, len(offsets), rng), nominal)
    time = (travel + settle) * p.dt
    battery = (travel * p.power_cruise + settle * p.power_hover) * p.dt
    return time, battery


def simulate_approach(p: MicroParams, offset: float, seed: int):
    """One approach over ``offset`` metres: returns (time s, battery units)."""
    if offset < 0:
        raise ValueError("approach offset must be >= 0")
    t, b = approach_batch(p, [offset], _rng(seed, 0))
    return float(t[0]), float(b[0])


def _vertical(p, height, n, rng):
    steps = _travel_steps(np.full(n, height), p.vertical_speed, p.dt)
    return steps * p.dt, steps * p.power_vertical * p.dt


def _search_cell(p, n, rng):
    """Fly across one cell along its centre line; an object placed uniformly
    in the cell is seen when it comes within the camera radius."""
    steps = _travel_steps(np.full(n, p.cell), p.speed, p.dt)
    oy = rng.uniform(0.0, p.cell, n)
    # distance of closest approach to the path y = cell/2
    lateral = np.abs(oy - p.cell / 2)
    seen = lateral <= p.detection_radius
    sensed = rng.random(n) < p.sensor_p
    return steps * p.dt, steps * p.power_cruise * p.dt, float(np.mean(seen & sensed))


def _grab(p, n, rng):
    steps = _travel_steps(np.full(n, p.grab_duration), 1.0, p.dt)
    err = np.abs(rng.normal(0.0, p.position_std, n)) if p.position_std > 0 else np.zeros(n)
    fail = float(np.mean(err > p.grab_tolerance))
    return steps * p.dt, steps * p.power_hover * p.dt, fail


def _transport_cell(p, n, rng):
    steps = _travel_steps(np.full(n, p.cell), p.speed, p.dt)
    hazard = p.drop_rate * p.dt
    k = int(steps.max(initial=0))
    u = rng.random((n, k))
    dropped = (u < hazard) & (np.arange(k) < steps[:, None])
    return steps * p.dt, steps * p.power_cruise * p.dt, float(np.mean(dropped.any(axis=1)))


@dataclass
class Interval:
    mean: float
    lo: int
    hi: int

    @classmethod
    def of(cls, samples):
        s = np.asarray(samples, dtype=np.float64)
        return cls(float(s.mean()), int(math.floor(s.min())), int(math.ceil(s.max())))

    def contains(self, x):
        return self.lo <= x <= self.hi


@dataclass
class ActionStat:
    time: Interval
    battery: Interval
    prob: dict = field(default_factory=dict)
    samples: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self):
        return {"time": asdict(self.time), "battery": asdict(self.battery), "prob": dict(self.prob)}


@dataclass
class ActionStats:
    actions: dict

    def __getitem__(self, name) -> ActionStat:
        return self.actions[name]

    def to_dict(self):
        return {name: s.to_dict() for name, s in self.actions.items()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls({name: ActionStat(Interval(**v["time"]), Interval(**v["battery"]), dict(v.get("prob", {})))
                    for name, v in d.items()})

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def calibrate(p: MicroParams) -> ActionStats:
    """Run ``p.trials`` trials of every abstract action and summarise them."""
    if p.trials < 2:
        raise ValueError("calibration needs at least 2 trials")
    n = p.trials
    out = {}

    def add(name, time, battery, prob=None):
        out[name] = ActionStat(Interval.of(time), Interval.of(battery), prob or {}, (time, battery))

    t, b = approach_batch(p, np.full(n, p.approach_offset), _rng(p.seed, 0))
    add("approach", t, b)
    t, b, alpha = _search_cell(p, n, _rng(p.seed, 1))
    add("search", t, b, {"detect": alpha})
    t, b = _vertical(p, p.search_height - p.grab_height, n, _rng(p.seed, 2))
    add("descend", t, b)
    t, b, fail = _grab(p, n, _rng(p.seed, 3))
    add("grab", t, b, {"fail": fail})
    t, b = _vertical(p, p.transport_height - p.grab_height, n, _rng(p.seed, 4))
    add("ascend", t, b)
    t, b, drop = _transport_cell(p, n, _rng(p.seed, 5))
    add("transport", t, b, {"drop": drop})
    return ActionStats(out)
