"""Greedy feedback synthesis and builders for the proven optimal-control families."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .sir import (Constant, ControlArc, EpidemicParams, EpidemicState,
                  PiecewiseControl, SingularBoundary, integrate_until)
from .viability import Zone, classify, phi_max


class InfeasibleStart(ValueError):
    pass


class NoSaturation(ValueError):
    pass


class ConstraintViolated(ValueError):
    pass


class OutOfSingularRange(ValueError):
    pass


_RANGE_TOL = 1e-12
_T_SEARCH_MAX = 2.0e4  # days; event searches beyond this signal a logic error


@dataclass(frozen=True)
class BangBangKnobs:
    """Switch times of a 0 - u_max - 0 control."""

    sigma0: float
    sigma1: float

    def __post_init__(self):
        if not 0.0 <= self.sigma0 <= self.sigma1:
            raise ValueError("need 0 <= sigma0 <= sigma1")


@dataclass(frozen=True)
class BoundaryArcKnobs:
    """Free knobs of the boundary-arc structure: free-arc length, singular
    duration and the length of the second full-control arc."""

    tau0: float
    delta_sing: float
    delta_post: float

    def __post_init__(self):
        if self.tau0 < 0.0 or self.delta_sing < 0.0 or self.delta_post < 0.0:
            raise ValueError("knobs must be non-negative")


StructureKnobs = BangBangKnobs | BoundaryArcKnobs


def singular_value(params: EpidemicParams, s: float) -> float:
    """Boundary feedback u = beta - gamma/s, defined between the two critical levels."""
    if not params.s_herd - _RANGE_TOL <= s <= params.s_max_controlled + _RANGE_TOL:
        raise OutOfSingularRange(
            f"s={s} outside [{params.s_herd}, {params.s_max_controlled}]")
    return params.beta - params.gamma / s


def t_stab(params: EpidemicParams) -> float:
    """Upper bound on the time spent riding the constraint line i = i_M."""
    return params.u_max / (params.beta * (params.beta - params.u_max) * params.i_M)


def build_bangbang(params: EpidemicParams, knobs: BangBangKnobs) -> PiecewiseControl:
    arcs: list[ControlArc] = []
    if knobs.sigma0 > 0.0:
        arcs.append(ControlArc(0.0, knobs.sigma0, Constant(0.0)))
    if knobs.sigma1 > knobs.sigma0:
        arcs.append(ControlArc(knobs.sigma0, knobs.sigma1, Constant(params.u_max)))
    return PiecewiseControl(tuple(arcs), terminal_zero=True)


_TOUCH_TOL = 1e-9  # tangential saturation slack on i_M


def _saturation_point(params: EpidemicParams, state: EpidemicState, t0: float,
                      step: float):
    """First time i reaches i_M under u = u_max from (t0, state), or None.

    The peak of i along the full-control trajectory is closed form (the
    constant-control curve through the state evaluated at its maximum), so
    hopeless starts are rejected without integrating. Trajectories riding the
    viable-set boundary touch i_M tangentially exactly where s crosses
    gamma/(beta - u_max), so the event watches both crossings and accepts a
    touch within _TOUCH_TOL.
    """
    m = params.s_max_controlled
    if state.s > m:
        peak = state.i + state.s - m + math.log(m / state.s) * m
    else:
        peak = state.i
    if peak < params.i_M - _TOUCH_TOL:
        return None
    # Trajectories riding the viable-set boundary touch i_M tangentially right
    # where s crosses gamma/(beta - u_max); there the crossing of i through i_M
    # is ill-conditioned in time, so the s crossing is the primary event and the
    # i event only fires once clearly past the cap.
    hit = integrate_until(params, state, Constant(params.u_max),
                          lambda s, i: max(i - (params.i_M + 1e-7), m - s),
                          t0, t0 + _T_SEARCH_MAX, step)
    if hit is None or hit[1].i < params.i_M - _TOUCH_TOL:
        return None
    return hit


def boundary_skeleton(params: EpidemicParams, state0: EpidemicState, tau0: float,
                      step: float = 0.01) -> tuple[float, EpidemicState]:
    """Saturation time tau1 and state there for a free arc of length tau0.

    Raises ConstraintViolated when i crosses i_M during the free arc and
    NoSaturation when full control never saturates the ICU level afterwards.
    """
    if classify(params, state0) is Zone.INFEASIBLE:
        raise InfeasibleStart(f"state {state0} lies above the viable set")
    state = state0
    if tau0 > 0.0:
        free = integrate_until(params, state0, Constant(0.0),
                               lambda s, i: i - params.i_M, 0.0, tau0, step)
        if free is not None and free[0] < tau0:
            raise ConstraintViolated(
                f"free arc reaches i_M at t={free[0]:.6g} before tau0={tau0}")
        state = _advance(params, state0, Constant(0.0), 0.0, tau0, step)
    hit = _saturation_point(params, state, tau0, step)
    if hit is None:
        raise NoSaturation(f"i never reaches i_M under u_max after tau0={tau0}")
    return hit


def assemble_boundary(params: EpidemicParams, tau0: float, tau1: float,
                      state1: EpidemicState, delta_sing: float,
                      delta_post: float) -> PiecewiseControl:
    """Arcs of the boundary structure once the saturation point is known."""
    arcs: list[ControlArc] = []
    if tau0 > 0.0:
        arcs.append(ControlArc(0.0, tau0, Constant(0.0)))
    if tau1 > tau0:
        arcs.append(ControlArc(tau0, tau1, Constant(params.u_max)))
    m = params.s_max_controlled
    s1 = state1.s
    if m < s1 <= m * (1.0 + 1e-6):
        s1 = m  # tangential saturation localized a hair past the admissible peak
    d_full = (s1 - params.s_herd) / (params.gamma * params.i_M)
    d = min(delta_sing, max(d_full, 0.0))
    tau2 = tau1
    if d > 0.0:
        tau2 = tau1 + d
        s_at_tau2 = s1 - params.gamma * params.i_M * d
        arcs.append(ControlArc(tau1, tau2, SingularBoundary(s_at_tau2, tau2)))
    if delta_post > 0.0:
        arcs.append(ControlArc(tau2, tau2 + delta_post, Constant(params.u_max)))
    return PiecewiseControl(tuple(arcs), terminal_zero=True)


def build_boundary(params: EpidemicParams, state0: EpidemicState,
                   knobs: BoundaryArcKnobs, step: float = 0.01) -> PiecewiseControl:
    """Boundary-family member: 0 / u_max to saturation / singular / u_max / 0.

    The saturation time tau1 is an event, not a knob; the singular duration is
    clamped so the boundary arc cannot slide past the herd threshold.
    """
    tau1, state1 = boundary_skeleton(params, state0, knobs.tau0, step)
    return assemble_boundary(params, knobs.tau0, tau1, state1,
                             knobs.delta_sing, knobs.delta_post)


def _advance(params, state, law, t0, t1, step):
    """State at t1 under one arc law (no event handling)."""
    from .sir import rk4_step

    span = t1 - t0
    if span <= 0.0:
        return state
    n = max(1, math.ceil(span / step - 1e-9))
    h = span / n
    s, i = state.s, state.i
    for j in range(n):
        s, i = rk4_step(params, law, t0 + j * h, s, i, h)
    return EpidemicState(s, i)


def synthesize_greedy(params: EpidemicParams, state0: EpidemicState,
                      step: float = 0.01) -> PiecewiseControl:
    """Event-chained minimal-effort strategy.

    Do nothing until the trajectory meets the viable-set boundary, apply full
    control while s exceeds gamma/(beta - u_max), ride the constraint with the
    singular feedback until herd immunity, then release.
    """
    zone = classify(params, state0)
    if zone is Zone.INFEASIBLE:
        raise InfeasibleStart(f"state {state0} lies above the viable set")
    if zone is Zone.SAFE:
        return PiecewiseControl.zero()

    hit = integrate_until(params, state0, Constant(0.0),
                          lambda s, i: i - phi_max(params, s),
                          0.0, _T_SEARCH_MAX, step)
    if hit is None:  # unreachable for states in the viable set above the safe zone
        raise RuntimeError("free trajectory never met the viable-set boundary")
    t_hit, state_hit = hit

    arcs: list[ControlArc] = []
    if t_hit > 0.0:
        arcs.append(ControlArc(0.0, t_hit, Constant(0.0)))
    m = params.s_max_controlled
    tau1, state1 = t_hit, state_hit
    if state_hit.s > m + 1e-12:
        lock = integrate_until(params, state_hit, Constant(params.u_max),
                               lambda s, i: m - s, t_hit, _T_SEARCH_MAX, step)
        if lock is None:
            raise RuntimeError("full-control arc never reached the singular range")
        tau1, state1 = lock
        arcs.append(ControlArc(t_hit, tau1, Constant(params.u_max)))
    d = (state1.s - params.s_herd) / (params.gamma * params.i_M)
    if d > 1e-12:
        tau2 = tau1 + d
        s_at_tau2 = state1.s - params.gamma * params.i_M * d
        arcs.append(ControlArc(tau1, tau2, SingularBoundary(s_at_tau2, tau2)))
    return PiecewiseControl(tuple(arcs), terminal_zero=True)
