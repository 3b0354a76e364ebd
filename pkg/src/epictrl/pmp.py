"""Backward adjoint integration and necessary-condition checks for candidate optima."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostWeights
from .sir import (EpidemicParams, PiecewiseControl, SingularBoundary,
                  Trajectory, effective_arcs)

_BOUNDARY_TOL = 1e-6  # |i - i_M| below this tags a constraint arc


class InconsistentInputs(ValueError):
    pass


@dataclass(frozen=True)
class AdjointPath:
    """Costates integrated backward from zero terminal data (normal case).

    eta = p_i - p_s, psi = eta*s*i is the switching function, mu_cum the
    cumulative constraint multiplier reconstructed from its density.
    """

    t: np.ndarray
    p_s: np.ndarray
    p_i: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    mu_cum: np.ndarray
    terminal: float


@dataclass(frozen=True)
class PmpReport:
    stationarity_fraction: float
    singular_residual: float | None
    hamiltonian_residual: float
    eta_min: float
    p_s_monotone: bool
    junction_residuals: tuple[tuple[float, float], ...]


def _check_consistency(trajectory: Trajectory, control: PiecewiseControl,
                       params: EpidemicParams) -> None:
    expected = effective_arcs(control, float(trajectory.t[-1])) \
        if trajectory.t[-1] > 0 else ()
    if len(expected) != len(trajectory.arcs):
        raise InconsistentInputs("control arcs do not match the trajectory")
    for a, b in zip(expected, trajectory.arcs):
        if abs(a.t_start - b.t_start) > 1e-9 or abs(a.t_end - b.t_end) > 1e-9 \
                or type(a.law) is not type(b.law):
            raise InconsistentInputs("control arcs do not match the trajectory")


def integrate_adjoint(params: EpidemicParams, weights: CostWeights,
                      trajectory: Trajectory,
                      control: PiecewiseControl) -> AdjointPath:
    """Integrate the conjugate equations backward along a trajectory.

    Fourth-order steps on the trajectory grid, with state values at stage
    midpoints recovered by cubic Hermite interpolation (the state derivatives
    are known exactly from the dynamics). On constraint arcs (i within 1e-6 of
    i_M) the multiplier density max(gamma*p_s - lambda2, 0) enters the p_i
    equation; junction atoms are not reconstructed.
    """
    _check_consistency(trajectory, control, params)
    b, g = params.beta, params.gamma
    l2 = weights.lambda2
    i_cap = params.i_M
    t, s, i = trajectory.t, trajectory.s, trajectory.i
    n = len(t)
    p_s = np.zeros(n)
    p_i = np.zeros(n)
    if n > 1:
        starts = list(trajectory.arc_starts) + [n - 1]

        def rhs(ps, pi, ss, ii, u, on_boundary):
            eta = pi - ps
            dmu = max(g * ps - l2, 0.0) if on_boundary else 0.0
            return -eta * (b - u) * ii, -(l2 + eta * (b - u) * ss - g * pi) - dmu

        cps = cpi = 0.0
        for a_idx in range(len(trajectory.arcs) - 1, -1, -1):
            arc = trajectory.arcs[a_idx]
            for k in range(starts[a_idx + 1], starts[a_idx], -1):
                h = t[k] - t[k - 1]
                u_r = arc.value_at(t[k], params)
                u_m = arc.value_at(t[k] - 0.5 * h, params)
                u_l = arc.value_at(t[k - 1], params)
                s_r, i_r, s_l, i_l = s[k], i[k], s[k - 1], i[k - 1]
                fs_r = -(b - u_r) * s_r * i_r
                fi_r = -fs_r - g * i_r
                fs_l = -(b - u_l) * s_l * i_l
                fi_l = -fs_l - g * i_l
                s_m = 0.5 * (s_l + s_r) + h * (fs_l - fs_r) / 8.0
                i_m = 0.5 * (i_l + i_r) + h * (fi_l - fi_r) / 8.0
                bd_r = abs(i_r - i_cap) <= _BOUNDARY_TOL
                bd_m = abs(i_m - i_cap) <= _BOUNDARY_TOL
                bd_l = abs(i_l - i_cap) <= _BOUNDARY_TOL
                k1s, k1i = rhs(cps, cpi, s_r, i_r, u_r, bd_r)
                k2s, k2i = rhs(cps - 0.5 * h * k1s, cpi - 0.5 * h * k1i,
                               s_m, i_m, u_m, bd_m)
                k3s, k3i = rhs(cps - 0.5 * h * k2s, cpi - 0.5 * h * k2i,
                               s_m, i_m, u_m, bd_m)
                k4s, k4i = rhs(cps - h * k3s, cpi - h * k3i, s_l, i_l, u_l, bd_l)
                cps -= h / 6.0 * (k1s + 2.0 * (k2s + k3s) + k4s)
                cpi -= h / 6.0 * (k1i + 2.0 * (k2i + k3i) + k4i)
                p_s[k - 1] = cps
                p_i[k - 1] = cpi

    eta = p_i - p_s
    psi = eta * s * i
    density = np.where(np.abs(i - i_cap) <= _BOUNDARY_TOL,
                       np.maximum(g * p_s - l2, 0.0), 0.0)
    mu_cum = np.concatenate(([0.0],
                             np.cumsum(0.5 * (density[1:] + density[:-1])
                                       * np.diff(t)))) if n > 1 else np.zeros(1)
    return AdjointPath(t, p_s, p_i, eta, psi, mu_cum, float(t[-1]))


def verify_pmp(params: EpidemicParams, weights: CostWeights, adjoint: AdjointPath,
               trajectory: Trajectory, control: PiecewiseControl,
               tol_sing: float = 1e-3) -> PmpReport:
    """Score the minimum-principle sign pattern and conservation law.

    Reports, never asserts: the switching function must sit below lambda1 on
    free arcs, above it under full control and near it on constraint arcs;
    the pre-Hamiltonian must stay near its terminal value lambda2 * i(T).
    """
    _check_consistency(trajectory, control, params)
    if len(trajectory) != len(adjoint.t):
        raise InconsistentInputs("adjoint and trajectory grids disagree")
    l1, l2 = weights.lambda1, weights.lambda2
    t, s, i = trajectory.t, trajectory.s, trajectory.i
    psi = adjoint.psi
    n = len(t)

    sat = tot = 0.0
    starts = list(trajectory.arc_starts) + [n - 1]
    for a_idx, arc in enumerate(trajectory.arcs):
        k0, k1 = starts[a_idx], starts[a_idx + 1]
        for k in range(k0 + 1, k1):
            dt = 0.5 * (t[k + 1] - t[k - 1])
            if abs(i[k] - params.i_M) <= _BOUNDARY_TOL:
                ok = abs(psi[k] - l1) <= tol_sing
            else:
                u = arc.value_at(t[k], params)
                if u <= 1e-12:
                    ok = psi[k] < l1
                elif abs(u - params.u_max) <= 1e-12:
                    ok = psi[k] > l1
                else:
                    ok = abs(psi[k] - l1) <= tol_sing
            tot += dt
            sat += dt if ok else 0.0
    stationarity = sat / tot if tot > 0.0 else 1.0

    boundary = np.abs(i - params.i_M) <= _BOUNDARY_TOL
    singular_residual = float(np.max(np.abs(psi[boundary] - l1))) \
        if np.any(boundary) else None

    u_arr = trajectory.u
    hamiltonian = l2 * i + l1 * u_arr + adjoint.eta * (params.beta - u_arr) * s * i \
        - params.gamma * adjoint.p_i * i
    k_const = l2 * float(i[-1])
    hamiltonian_residual = float(np.max(np.abs(hamiltonian - k_const))
                                 / max(abs(k_const), 1e-12))

    dps = np.diff(adjoint.p_s)
    p_s_monotone = bool(np.all(dps <= 1e-9) and np.all(adjoint.p_s >= -1e-9))

    junctions = []
    for a_idx in range(1, len(trajectory.arcs)):
        k = starts[a_idx]
        junctions.append((float(t[k]), float(abs(psi[k] - l1))))

    return PmpReport(
        stationarity_fraction=float(stationarity),
        singular_residual=singular_residual,
        hamiltonian_residual=hamiltonian_residual,
        eta_min=float(np.min(adjoint.eta)),
        p_s_monotone=p_s_monotone,
        junction_residuals=tuple(junctions),
    )
