"""Closed-form viability curves and zone classification for the ICU-constrained SIR."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .sir import EpidemicParams, EpidemicState


class NonPositiveS(ValueError):
    pass


class OutsideTriangle(ValueError):
    pass


class Zone(Enum):
    SAFE = "safe"
    VIABLE_NO_LOCKDOWN = "viable_no_lockdown"
    VIABLE_LOCKDOWN = "viable_lockdown"
    INFEASIBLE = "infeasible"


class Curve(Enum):
    PHI0 = "phi0"
    PHI_MAX = "phimax"
    PSI0 = "psi0"


@dataclass(frozen=True)
class CriticalSusceptibles:
    herd: float
    max_controlled: float


def _curved(i_M, junction, coeff, s):
    # constant-control trajectory through (junction, i_M); the (junction - s)
    # grouping makes the branch land on i_M exactly at s == junction
    return i_M + (junction - s) + coeff * np.log(s / junction)


def phi0(params: EpidemicParams, s):
    """Upper boundary of the safe zone (uncontrolled trajectory through (gamma/beta, i_M))."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise NonPositiveS("curves are defined for s > 0 only")
    c = params.s_herd
    out = np.where(s < c, params.i_M, _curved(params.i_M, c, c, s))
    return float(out) if out.ndim == 0 else out


def phi_max(params: EpidemicParams, s):
    """Upper boundary of the viable set (full-control trajectory through its peak)."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise NonPositiveS("curves are defined for s > 0 only")
    m = params.s_max_controlled
    out = np.where(s < m, params.i_M, _curved(params.i_M, m, m, s))
    return float(out) if out.ndim == 0 else out


def psi0(params: EpidemicParams, s):
    """Uncontrolled trajectory through (gamma/(beta-u_max), i_M), truncated at i_M."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise NonPositiveS("curves are defined for s > 0 only")
    m = params.s_max_controlled
    out = np.where(s < m, params.i_M, _curved(params.i_M, m, params.s_herd, s))
    return float(out) if out.ndim == 0 else out


_CURVE_FNS = {Curve.PHI0: phi0, Curve.PHI_MAX: phi_max, Curve.PSI0: psi0}


def curve_value(params: EpidemicParams, which: Curve, s):
    """Evaluate one of the three boundary curves; negative ordinates are returned as-is."""
    return _CURVE_FNS[which](params, s)


def classify(params: EpidemicParams, state: EpidemicState) -> Zone:
    """Assign a state to its viability zone. Boundary ties resolve to the safer zone."""
    if not state.in_triangle():
        raise OutsideTriangle(f"state {state} outside the state triangle")
    s, i = state.s, state.i
    if i <= phi0(params, s):
        return Zone.SAFE
    if i <= psi0(params, s):
        return Zone.VIABLE_NO_LOCKDOWN
    if i <= phi_max(params, s):
        return Zone.VIABLE_LOCKDOWN
    return Zone.INFEASIBLE


def critical_susceptibles(params: EpidemicParams) -> CriticalSusceptibles:
    return CriticalSusceptibles(herd=params.s_herd,
                                max_controlled=params.s_max_controlled)
