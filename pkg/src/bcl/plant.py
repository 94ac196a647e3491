"""Strict-feedback plant, input saturation and disturbance schedules."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidBounds, NonFinite

log = logging.getLogger(__name__)

PAPER_PLANT = "paper-sec5"


@dataclass(frozen=True)
class PlantModel:
    """x_i' = f_i(x[:i]) + g_i(x[:i]) x_{i+1} + w_i, with sat(u) entering the last stage.

    ``f[i]`` and ``g[i]`` receive the leading slice ``x[: i + 1]``.
    """

    n: int
    f: Sequence[Callable]
    g: Sequence[Callable]
    u_min: float
    u_max: float
    g_bounds: Sequence[tuple] = ()
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1 or len(self.f) != self.n or len(self.g) != self.n:
            raise DimensionMismatch(f"plant of order {self.n} needs {self.n} f and g functions")
        if not (self.u_min < 0 < self.u_max):
            raise InvalidBounds(f"need u_min < 0 < u_max, got [{self.u_min}, {self.u_max}]")
        if self.g_bounds:
            if len(self.g_bounds) != self.n:
                raise DimensionMismatch("one (g_min, g_max) pair per stage")
            for lo, hi in self.g_bounds:
                if not (0 < lo <= hi):
                    raise InvalidBounds(f"gain bounds must satisfy 0 < g_min <= g_max, got ({lo}, {hi})")

    def f_values(self, x):
        return np.array([self.f[i](x[: i + 1]) for i in range(self.n)], dtype=float)

    def g_values(self, x):
        return np.array([self.g[i](x[: i + 1]) for i in range(self.n)], dtype=float)

    def check_gain_bounds(self, x):
        """Log (but do not enforce) gain values that leave the declared bounds."""
        if not self.g_bounds:
            return True
        ok = True
        for i, gi in enumerate(self.g_values(x)):
            lo, hi = self.g_bounds[i]
            if not (lo <= abs(gi) <= hi):
                log.warning("g_%d = %g outside declared bounds [%g, %g]", i + 1, gi, lo, hi)
                ok = False
        return ok


@dataclass(frozen=True)
class DisturbanceSchedule:
    """State-dependent base disturbance plus decaying pulses on every channel."""

    base: Callable
    pulse_times: tuple = ()
    pulse_amp: float = 0.0
    pulse_decay: float = 0.1
    name: str = "custom"

    def __post_init__(self):
        if not (self.pulse_decay > 0):
            raise ValueError("pulse decay rate must be positive")

    def pulse(self, t):
        total = 0.0
        for tj in self.pulse_times:
            if t >= tj:
                total += self.pulse_amp * math.exp(-self.pulse_decay * (t - tj))
        return total


@dataclass
class PlantState:
    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if not np.all(np.isfinite(self.x)):
            raise NonFinite("plant state has NaN/Inf entries")


def saturate(u, u_min, u_max):
    if not (u_min < u_max):
        raise InvalidBounds(f"u_min must be below u_max, got [{u_min}, {u_max}]")
    if u >= u_max:
        return float(u_max)
    if u <= u_min:
        return float(u_min)
    return float(u)


def plant_derivative(model, state, u, omega):
    x = np.asarray(state.x, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if x.shape != (model.n,) or omega.shape != (model.n,):
        raise DimensionMismatch(f"state and disturbance must have {model.n} entries")
    f = model.f_values(x)
    g = model.g_values(x)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NonFinite(f"non-finite f/g at x={x.tolist()}")
    nxt = np.empty(model.n)
    nxt[:-1] = x[1:]
    nxt[-1] = saturate(u, model.u_min, model.u_max)
    return f + g * nxt + omega


def evaluate_disturbance(sched, t, x):
    w = np.asarray(sched.base(t, np.asarray(x, dtype=float)), dtype=float)
    return w + sched.pulse(t)


# --- the three-stage example system -------------------------------------------------


def _f1(xb):
    x1 = xb[0]
    return math.sin(x1) / (1.0 + x1 * x1)


def _f2(xb):
    x1, x2 = xb[0], xb[1]
    return math.tanh(x2) * math.exp(-((x1 * x2) ** 4))


def _f3(xb):
    return xb[0] * xb[1]


def _unit(xb):
    return 1.0


def paper_base_disturbance(t, x):
    return np.array(
        [
            0.1 * math.sin(x[0]) * math.cos(t),
            0.15 * math.sin(x[0] * x[1]),
            0.1 * math.cos(x[2]) * math.sin(t),
        ]
    )


def make_paper_plant(u_max=5.0, u_min=None):
    """Three-stage example plant with unit input gains and |u| <= 5 by default."""
    if u_min is None:
        u_min = -u_max
    return PlantModel(
        n=3,
        f=(_f1, _f2, _f3),
        g=(_unit, _unit, _unit),
        u_min=u_min,
        u_max=u_max,
        g_bounds=((0.5, 1.5),) * 3,
        name=PAPER_PLANT,
    )


def make_paper_disturbance(pulse_amp=0.2, pulse_times=(10.0, 15.0, 20.0, 25.0), pulse_decay=0.1):
    return DisturbanceSchedule(
        base=paper_base_disturbance,
        pulse_times=tuple(float(t) for t in pulse_times),
        pulse_amp=float(pulse_amp),
        pulse_decay=float(pulse_decay),
        name=PAPER_PLANT,
    )


def zero_disturbance(n):
    return DisturbanceSchedule(base=lambda t, x: np.zeros(n), name="none")


PRESETS = {PAPER_PLANT: make_paper_plant}
DISTURBANCE_BASES = {PAPER_PLANT: paper_base_disturbance}
