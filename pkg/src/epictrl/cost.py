"""Cost evaluation: trapezoid quadrature on simulated grids plus the exact tail identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .sir import (Constant, EpidemicParams, EpidemicState, PiecewiseControl,
                  Trajectory, simulate)


class RootNotBracketed(ArithmeticError):
    pass


class NonTerminatingControl(ValueError):
    pass


@dataclass(frozen=True)
class CostWeights:
    lambda1: float  # weight on the control effort
    lambda2: float  # weight on the infected fraction

    def __post_init__(self):
        if self.lambda1 <= 0.0:
            raise ValueError("lambda1 must be positive")
        if self.lambda2 < 0.0:
            raise ValueError("lambda2 must be non-negative")


@dataclass(frozen=True)
class CostBreakdown:
    control_part: float
    infection_part: float
    tail_part: float

    @property
    def total(self) -> float:
        return self.control_part + self.infection_part + self.tail_part


def s_infinity(params: EpidemicParams, state: EpidemicState) -> float:
    """Limit of s under u = 0 from the given state.

    Unique root x in (0, gamma/beta) of x - c*ln(x) = s + i - c*ln(s) with
    c = gamma/beta, found by bisection to 1e-12 absolute.
    """
    c = params.s_herd
    rhs = state.s + state.i - c * np.log(state.s)

    def f(x):
        return x - c * np.log(x) - rhs

    lo, hi = 1e-15, c
    if f(lo) <= 0.0 or f(hi) >= 0.0:
        raise RootNotBracketed("sign test failed on (1e-15, gamma/beta)")
    return float(bisect(f, lo, hi, xtol=1e-12))


def tail_infected_integral(params: EpidemicParams, state: EpidemicState) -> float:
    """Integral of i over the uncontrolled tail: (s + i - s_inf) / gamma."""
    return (state.s + state.i - s_infinity(params, state)) / params.gamma


def cost_finite(params: EpidemicParams, weights: CostWeights,
                trajectory: Trajectory) -> CostBreakdown:
    """Quadrature of lambda1*u + lambda2*i on the sample grid, arc by arc.

    Constant arcs contribute value*length exactly; the singular law is
    trapezoided on the arc's own samples so junctions never mix laws.
    """
    if len(trajectory) < 2:
        return CostBreakdown(0.0, 0.0, 0.0)
    t, i = trajectory.t, trajectory.i
    u_int = 0.0
    starts = trajectory.arc_starts
    for k, arc in enumerate(trajectory.arcs):
        k1 = starts[k + 1] if k + 1 < len(starts) else len(t) - 1
        if isinstance(arc.law, Constant):
            u_int += arc.law.value * (arc.t_end - arc.t_start)
        else:
            tt = t[starts[k]:k1 + 1]
            uu = np.array([arc.value_at(x, params) for x in tt])
            u_int += float(np.trapezoid(uu, tt))
    i_int = float(np.trapezoid(i, t))
    return CostBreakdown(weights.lambda1 * u_int, weights.lambda2 * i_int, 0.0)


def cost_infinite(params: EpidemicParams, weights: CostWeights,
                  control: PiecewiseControl, state0: EpidemicState,
                  step: float = 0.01) -> CostBreakdown:
    """Infinite-horizon cost: quadrature up to the last finite arc end, then the
    closed-form tail for the uncontrolled remainder."""
    if not control.terminal_zero:
        raise NonTerminatingControl("infinite-horizon cost needs terminal_zero")
    t_f = control.end_time
    if t_f > 0.0:
        traj = simulate(params, state0, control, t_f, step)
        base = cost_finite(params, weights, traj)
        end_state = traj.final_state
    else:
        base = CostBreakdown(0.0, 0.0, 0.0)
        end_state = state0
    tail = weights.lambda2 * tail_infected_integral(params, end_state)
    return CostBreakdown(base.control_part, base.infection_part, tail)
