"""Command-line interface: scenario runs with CSV/JSON outputs.

Exit codes: 0 success, 1 validation or I/O error, 2 infeasible scenario.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from enum import Enum
from pathlib import Path

import numpy as np

from .cost import cost_finite, cost_infinite
from .optimize import (choose_horizon, gamma_diagnostic, gamma_regime_report,
                       optimize_structured)
from .pmp import integrate_adjoint, verify_pmp
from .policy import InfeasibleStart, synthesize_greedy
from .scenarios import PRESETS, Scenario, ScenarioError, resolve_scenario
from .sir import PiecewiseControl, Trajectory, mass_balance_residual, simulate
from .viability import classify, critical_susceptibles, phi0, phi_max, psi0

COMMANDS = ("simulate", "viability", "greedy", "optimize", "verify", "gamma")


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_report(out_dir: Path, payload: dict) -> None:
    (out_dir / "report.json").write_text(
        json.dumps(_jsonable(payload), indent=2) + "\n")


def _write_trajectory(out_dir: Path, scenario: Scenario,
                      trajectory: Trajectory) -> None:
    """CSV with 12 significant digits; cumulative cost on the sample grid."""
    t, s, i, u = trajectory.t, trajectory.s, trajectory.i, trajectory.u
    running = scenario.lambda1 * u + scenario.lambda2 * i
    panels = 0.5 * (running[1:] + running[:-1]) * np.diff(t)
    cum = np.concatenate(([0.0], np.cumsum(panels)))
    lines = ["t,s,i,u,cumulative_cost"]
    for k in range(len(t)):
        lines.append("%.12g,%.12g,%.12g,%.12g,%.12g"
                     % (t[k], s[k], i[k], u[k], cum[k]))
    (out_dir / "trajectory.csv").write_text("\n".join(lines) + "\n")


def _control_summary(control: PiecewiseControl, params) -> list[dict]:
    out = []
    for arc in control.arcs:
        law = ("singular" if arc.is_singular
               else ("zero" if arc.value_at(arc.t_start, params) == 0.0 else "constant"))
        out.append({"t_start": arc.t_start, "t_end": arc.t_end, "law": law,
                    "u_start": arc.value_at(arc.t_start, params),
                    "u_end": arc.value_at(arc.t_end, params)})
    return out


def _events(trajectory: Trajectory) -> list[dict]:
    return [{"kind": e.kind.value, "t": e.t} for e in trajectory.events]


def cmd_simulate(scenario: Scenario, out_dir: Path) -> int:
    params = scenario.params
    control = PiecewiseControl.zero()
    traj = simulate(params, scenario.state0, control, scenario.horizon,
                    scenario.step)
    _write_trajectory(out_dir, scenario, traj)
    _write_report(out_dir, {
        "command": "simulate",
        "scenario": scenario.name,
        "control": "zero",
        "peak_infected": traj.max_infected,
        "final_state": {"s": float(traj.s[-1]), "i": float(traj.i[-1])},
        "mass_balance_residual": mass_balance_residual(params, traj),
        "events": _events(traj),
    })
    return 0


def cmd_viability(scenario: Scenario, out_dir: Path) -> int:
    params = scenario.params
    grid = np.arange(1e-3, 1.0 + 1e-12, 1e-3)
    lines = ["s,phi0,psi0,phimax"]
    v_phi0 = phi0(params, grid)
    v_psi0 = psi0(params, grid)
    v_phimax = phi_max(params, grid)
    for k in range(len(grid)):
        lines.append("%.12g,%.12g,%.12g,%.12g"
                     % (grid[k], v_phi0[k], v_psi0[k], v_phimax[k]))
    (out_dir / "zones.csv").write_text("\n".join(lines) + "\n")
    crit = critical_susceptibles(params)
    _write_report(out_dir, {
        "command": "viability",
        "scenario": scenario.name,
        "classification": classify(params, scenario.state0).value,
        "critical_susceptibles": crit,
    })
    return 0


def cmd_greedy(scenario: Scenario, out_dir: Path) -> int:
    params = scenario.params
    control = synthesize_greedy(params, scenario.state0, step=scenario.step)
    horizon = max(scenario.horizon, control.end_time)
    traj = simulate(params, scenario.state0, control, horizon, scenario.step)
    cost = cost_infinite(params, scenario.weights, control, scenario.state0,
                         scenario.step)
    _write_trajectory(out_dir, scenario, traj)
    _write_report(out_dir, {
        "command": "greedy",
        "scenario": scenario.name,
        "arcs": _control_summary(control, params),
        "cost": cost,
        "total_cost": cost.total,
        "peak_infected": traj.max_infected,
        "events": _events(traj),
    })
    return 0


def cmd_optimize(scenario: Scenario, out_dir: Path) -> int:
    params = scenario.params
    report = optimize_structured(params, scenario.weights, scenario.state0,
                                 horizon_hint=scenario.horizon,
                                 step_final=scenario.step)
    control = report.best_control
    horizon = max(scenario.horizon, control.end_time)
    traj = simulate(params, scenario.state0, control, horizon, scenario.step)
    _write_trajectory(out_dir, scenario, traj)
    _write_report(out_dir, {
        "command": "optimize",
        "scenario": scenario.name,
        "family": type(report.best_knobs).__name__,
        "knobs": report.best_knobs,
        "switch_times": report.switch_times,
        "cost": report.best_cost,
        "total_cost": report.best_cost.total,
        "feasible": report.feasible,
        "evaluations": report.evaluations,
        "family_compared": report.family_compared,
        "arcs": _control_summary(control, params),
    })
    return 0


def cmd_verify(scenario: Scenario, out_dir: Path) -> int:
    params = scenario.params
    limit = optimize_structured(params, scenario.weights, scenario.state0,
                                horizon_hint=scenario.horizon,
                                step_final=scenario.step)
    t_start = max(choose_horizon(params, scenario.state0, limit.best_control),
                  limit.best_control.end_time + 10.0)
    horizon, finite = gamma_regime_report(params, scenario.weights,
                                          scenario.state0, t_start,
                                          step_final=scenario.step)
    control = finite.best_control
    traj = simulate(params, scenario.state0, control, horizon, scenario.step)
    adjoint = integrate_adjoint(params, scenario.weights, traj, control)
    pmp = verify_pmp(params, scenario.weights, adjoint, traj, control)
    _write_trajectory(out_dir, scenario, traj)
    _write_report(out_dir, {
        "command": "verify",
        "scenario": scenario.name,
        "verification_horizon": horizon,
        "switch_times": finite.switch_times,
        "cost": finite.best_cost,
        "feasible": finite.feasible,
        "pmp": pmp,
    })
    return 0


def cmd_gamma(scenario: Scenario, out_dir: Path) -> int:
    params = scenario.params
    horizons = [round(r * scenario.horizon) for r in (0.6, 0.8, 1.0, 1.2)]
    diag = gamma_diagnostic(params, scenario.weights, scenario.state0, horizons)
    _write_report(out_dir, {
        "command": "gamma",
        "scenario": scenario.name,
        "horizons": diag.horizons,
        "truncated_costs": diag.truncated_costs,
        "limit_cost": diag.limit_cost,
        "gaps": diag.gaps,
    })
    return 0


_DISPATCH = {
    "simulate": cmd_simulate,
    "viability": cmd_viability,
    "greedy": cmd_greedy,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
    "gamma": cmd_gamma,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epictrl",
        description="Controlled SIR epidemic toolkit: simulation, viability "
                    "zones, greedy and optimal lockdown policies.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("scenario",
                        help="preset name (%s) or scenario file path"
                             % ", ".join(sorted(PRESETS)))
    parser.add_argument("--lambda2", type=float, default=None,
                        help="override the infection-cost weight")
    parser.add_argument("--horizon", type=float, default=None,
                        help="override the scenario horizon, days")
    parser.add_argument("--step", type=float, default=None,
                        help="override the integration step, days")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory (default: current)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    overrides = {}
    if args.lambda2 is not None:
        overrides["lambda2"] = args.lambda2
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.step is not None:
        overrides["step"] = args.step
    try:
        if overrides:
            scenario = scenario.override(**overrides)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = args.out
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    try:
        return _DISPATCH[args.command](scenario, out_dir)
    except InfeasibleStart as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
