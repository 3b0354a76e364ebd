"""Controlled SIR dynamics: piecewise controls, arc-aligned RK4 integration, events."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Union

import numpy as np


class InvalidInitialState(ValueError):
    pass


class InvalidControl(ValueError):
    pass


class UndefinedControlTime(ValueError):
    pass


EVENT_TOL = 1e-10     # bisection resolution for event times, days
_ARM_MARGIN = 1e-9    # hysteresis before the ICU crossing detector re-arms
_BOUND_SLACK = 1e-9   # tolerance on control bound checks


@dataclass(frozen=True)
class EpidemicParams:
    """Epidemic rates and constraint levels. Rates are per day, levels are fractions."""

    beta: float
    gamma: float
    u_max: float
    i_M: float

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.u_max < self.beta:
            raise ValueError(f"u_max must lie in (0, beta), got {self.u_max}")
        if not 0.0 < self.i_M <= 1.0:
            raise ValueError(f"i_M must lie in (0, 1], got {self.i_M}")

    @property
    def s_herd(self) -> float:
        """Susceptible level below which infections decline without control."""
        return self.gamma / self.beta

    @property
    def s_max_controlled(self) -> float:
        """Susceptible level below which infections decline under full control."""
        return self.gamma / (self.beta - self.u_max)


@dataclass(frozen=True)
class EpidemicState:
    s: float
    i: float

    def in_triangle(self) -> bool:
        return self.s > 0.0 and self.i > 0.0 and self.s + self.i <= 1.0


@dataclass(frozen=True)
class Constant:
    value: float

    def value_at(self, t: float, params: EpidemicParams) -> float:
        return self.value


@dataclass(frozen=True)
class SingularBoundary:
    """Feedback law holding i at i_M: u = beta - gamma / s_nominal(t).

    s_nominal decreases linearly from the arc through (tau2, s_at_tau2) at
    slope -gamma*i_M, which is the susceptible drift while the constraint
    is active.
    """

    s_at_tau2: float
    tau2: float

    def value_at(self, t: float, params: EpidemicParams) -> float:
        s_nom = self.s_at_tau2 + params.gamma * params.i_M * (self.tau2 - t)
        return params.beta - params.gamma / s_nom


ControlLaw = Union[Constant, SingularBoundary]


@dataclass(frozen=True)
class ControlArc:
    t_start: float
    t_end: float
    law: ControlLaw

    def value_at(self, t: float, params: EpidemicParams) -> float:
        return self.law.value_at(t, params)

    @property
    def is_singular(self) -> bool:
        return isinstance(self.law, SingularBoundary)


@dataclass(frozen=True)
class PiecewiseControl:
    """Ordered contiguous arcs starting at t=0, optionally u=0 forever after the last."""

    arcs: tuple[ControlArc, ...]
    terminal_zero: bool = False

    def __post_init__(self):
        prev = 0.0
        for arc in self.arcs:
            if abs(arc.t_start - prev) > 1e-9:
                raise ValueError(f"arcs not contiguous at t={arc.t_start}")
            if arc.t_end < arc.t_start:
                raise ValueError("arc with negative duration")
            prev = arc.t_end

    @classmethod
    def zero(cls) -> "PiecewiseControl":
        return cls((), terminal_zero=True)

    @classmethod
    def constant(cls, value: float, duration: float,
                 terminal_zero: bool = True) -> "PiecewiseControl":
        return cls((ControlArc(0.0, duration, Constant(value)),), terminal_zero)

    @property
    def end_time(self) -> float:
        """End of the last finite arc (0 when there are no arcs)."""
        return self.arcs[-1].t_end if self.arcs else 0.0

    def value_at(self, t: float, params: EpidemicParams) -> float:
        """Control value at time t; arcs are half-open [t_start, t_end)."""
        if t < 0.0:
            raise ValueError("control undefined for t < 0")
        for arc in self.arcs:
            if arc.t_start <= t < arc.t_end:
                return arc.value_at(t, params)
        if self.terminal_zero:
            return 0.0
        raise UndefinedControlTime(f"control undefined at t={t}")


class EventKind(Enum):
    ICU_HIT = "icu_hit"
    HERD_CROSS = "herd_cross"
    SWITCH = "switch"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    t: float


@dataclass(frozen=True)
class Trajectory:
    """Time-sampled (t, s, i, u) path with tagged events.

    u is right-continuous at arc junctions; the final sample keeps the last
    arc's value. arc_starts[k] is the sample index at which arcs[k] begins,
    so quadrature panels never straddle a control discontinuity.
    """

    t: np.ndarray
    s: np.ndarray
    i: np.ndarray
    u: np.ndarray
    events: tuple[Event, ...]
    arc_starts: tuple[int, ...]
    arcs: tuple[ControlArc, ...]

    def __len__(self) -> int:
        return len(self.t)

    @property
    def final_state(self) -> EpidemicState:
        return EpidemicState(float(self.s[-1]), float(self.i[-1]))

    @property
    def max_infected(self) -> float:
        return float(np.max(self.i))

    def events_of(self, kind: EventKind) -> list[Event]:
        return [e for e in self.events if e.kind is kind]


def rk4_step(params: EpidemicParams, law: ControlLaw, t: float,
             s: float, i: float, h: float) -> tuple[float, float]:
    """One classical 4th-order step of the controlled SIR system."""
    b = params.beta
    g = params.gamma
    if type(law) is Constant:
        u1 = u2 = u4 = law.value
    else:
        u1 = law.value_at(t, params)
        u2 = law.value_at(t + 0.5 * h, params)
        u4 = law.value_at(t + h, params)
    k1s = -(b - u1) * s * i
    k1i = -k1s - g * i
    s2 = s + 0.5 * h * k1s
    i2 = i + 0.5 * h * k1i
    k2s = -(b - u2) * s2 * i2
    k2i = -k2s - g * i2
    s3 = s + 0.5 * h * k2s
    i3 = i + 0.5 * h * k2i
    k3s = -(b - u2) * s3 * i3
    k3i = -k3s - g * i3
    s4 = s + h * k3s
    i4 = i + h * k3i
    k4s = -(b - u4) * s4 * i4
    k4i = -k4s - g * i4
    return (s + h / 6.0 * (k1s + 2.0 * (k2s + k3s) + k4s),
            i + h / 6.0 * (k1i + 2.0 * (k2i + k3i) + k4i))


def _bisect_event(params, law, t0, s0, i0, h, gfun) -> float:
    """Locate the zero of gfun(s, i) inside one step, assuming a sign change."""
    g_lo = gfun(s0, i0)
    lo, hi = 0.0, h
    while hi - lo > EVENT_TOL:
        mid = 0.5 * (lo + hi)
        sm, im = rk4_step(params, law, t0, s0, i0, mid)
        if (gfun(sm, im) > 0.0) == (g_lo > 0.0):
            lo = mid
        else:
            hi = mid
    return t0 + 0.5 * (lo + hi)


def _check_arc(params: EpidemicParams, arc: ControlArc) -> None:
    lo, hi = -_BOUND_SLACK, params.u_max + _BOUND_SLACK
    if isinstance(arc.law, Constant):
        if not lo <= arc.law.value <= hi:
            raise InvalidControl(f"arc value {arc.law.value} outside [0, u_max]")
        return
    if arc.law.s_at_tau2 <= 0.0:
        raise InvalidControl("singular law with non-positive reference susceptibles")
    # the singular law is decreasing in t, so the endpoints bound it
    for t in (arc.t_start, arc.t_end):
        v = arc.value_at(t, params)
        if not lo <= v <= hi:
            raise InvalidControl(f"singular value {v} at t={t} outside [0, u_max]")


def effective_arcs(control: PiecewiseControl, t_end: float) -> tuple[ControlArc, ...]:
    """Clip a control to [0, t_end], materialising the terminal zero arc."""
    segs: list[ControlArc] = []
    for arc in control.arcs:
        if arc.t_start >= t_end:
            break
        b = min(arc.t_end, t_end)
        if b > arc.t_start:
            segs.append(ControlArc(arc.t_start, b, arc.law))
    covered = segs[-1].t_end if segs else 0.0
    if covered < t_end:
        if not control.terminal_zero:
            raise UndefinedControlTime(
                f"control ends at {covered} but simulation needs [0, {t_end}]")
        segs.append(ControlArc(covered, t_end, Constant(0.0)))
    return tuple(segs)


def simulate(params: EpidemicParams, state0: EpidemicState,
             control: PiecewiseControl, t_end: float,
             step: float = 0.01) -> Trajectory:
    """Integrate the controlled SIR system on [0, t_end].

    Steps are aligned to arc boundaries; crossings of i through i_M and of s
    through the herd threshold are localized by bisection to EVENT_TOL days.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    if t_end < 0.0:
        raise ValueError("t_end must be non-negative")
    if not state0.in_triangle():
        raise InvalidInitialState(f"state {state0} outside the state triangle")
    segs = effective_arcs(control, t_end)
    for arc in segs:
        _check_arc(params, arc)

    c_herd = params.s_herd
    i_cap = params.i_M
    ts = [0.0]
    ss = [state0.s]
    ii = [state0.i]
    uu = [segs[0].value_at(0.0, params) if segs else 0.0]
    events: list[Event] = []
    arc_starts: list[int] = []
    herd_armed = state0.s > c_herd
    icu_armed = state0.i < i_cap - _ARM_MARGIN

    for k, arc in enumerate(segs):
        arc_starts.append(len(ts) - 1)
        if k > 0:
            events.append(Event(EventKind.SWITCH, arc.t_start))
            uu[-1] = arc.value_at(arc.t_start, params)  # right-continuous at junctions
        span = arc.t_end - arc.t_start
        n = max(1, math.ceil(span / step - 1e-9))
        h = span / n
        s, i = ss[-1], ii[-1]
        for j in range(n):
            t0 = arc.t_start + j * h
            s1, i1 = rk4_step(params, arc.law, t0, s, i, h)
            if herd_armed and s1 <= c_herd:
                te = _bisect_event(params, arc.law, t0, s, i, h,
                                   lambda s_, i_: s_ - c_herd)
                events.append(Event(EventKind.HERD_CROSS, te))
                herd_armed = False
            if icu_armed:
                if i1 >= i_cap:
                    te = _bisect_event(params, arc.law, t0, s, i, h,
                                       lambda s_, i_: i_ - i_cap)
                    events.append(Event(EventKind.ICU_HIT, te))
                    icu_armed = False
            elif i1 < i_cap - _ARM_MARGIN:
                icu_armed = True
            t1 = arc.t_end if j == n - 1 else t0 + h
            ts.append(t1)
            ss.append(s1)
            ii.append(i1)
            uu.append(arc.value_at(t1, params))
            s, i = s1, i1

    events.sort(key=lambda e: e.t)
    return Trajectory(np.asarray(ts), np.asarray(ss), np.asarray(ii),
                      np.asarray(uu), tuple(events), tuple(arc_starts), segs)


def mass_balance_residual(params: EpidemicParams, trajectory: Trajectory) -> float:
    """Max deviation from s+i-s0-i0 = -gamma * integral(i), trapezoid on the grid."""
    if len(trajectory) < 2:
        return 0.0
    t, s, i = trajectory.t, trajectory.s, trajectory.i
    panels = 0.5 * (i[1:] + i[:-1]) * np.diff(t)
    cum = np.concatenate(([0.0], np.cumsum(panels)))
    resid = s + i - s[0] - i[0] + params.gamma * cum
    return float(np.max(np.abs(resid)))


def integrate_until(params: EpidemicParams, state: EpidemicState, law: ControlLaw,
                    gfun: Callable[[float, float], float], t0: float, t_max: float,
                    step: float,
                    abort: Callable[[float, float], bool] | None = None):
    """Integrate one arc law until gfun(s, i) >= 0, localizing the hit by bisection.

    Returns (t_hit, EpidemicState) or None when abort(s, i) triggers or t_max
    is reached first. gfun must be negative at the start; a non-negative start
    fires immediately.
    """
    s, i = state.s, state.i
    if gfun(s, i) >= 0.0:
        return t0, state
    t = t0
    while t < t_max:
        h = min(step, t_max - t)
        s1, i1 = rk4_step(params, law, t, s, i, h)
        if gfun(s1, i1) >= 0.0:
            te = _bisect_event(params, law, t, s, i, h, gfun)
            se, ie = rk4_step(params, law, t, s, i, te - t)
            return te, EpidemicState(se, ie)
        t += h
        s, i = s1, i1
        if abort is not None and abort(s, i):
            return None
    return None
