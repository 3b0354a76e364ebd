"""Optimal lockdown control of an SIR epidemic under an ICU capacity constraint."""

from .cost import (CostBreakdown, CostWeights, NonTerminatingControl,
                   RootNotBracketed, cost_finite, cost_infinite, s_infinity,
                   tail_infected_integral)
from .optimize import (FamilyComparison, GammaDiagnostic, HorizonNotFound,
                       OptimizationReport, choose_horizon, gamma_diagnostic,
                       gamma_regime_report, optimize_structured)
from .pmp import (AdjointPath, InconsistentInputs, PmpReport,
                  integrate_adjoint, verify_pmp)
from .policy import (BangBangKnobs, BoundaryArcKnobs, ConstraintViolated,
                     InfeasibleStart, NoSaturation, OutOfSingularRange,
                     build_bangbang, build_boundary, singular_value,
                     synthesize_greedy, t_stab)
from .scenarios import PRESETS, Scenario, ScenarioError, load_scenario, save_scenario
from .sir import (Constant, ControlArc, EpidemicParams, EpidemicState, Event,
                  EventKind, InvalidControl, InvalidInitialState,
                  PiecewiseControl, SingularBoundary, Trajectory,
                  UndefinedControlTime, mass_balance_residual, simulate)
from .viability import (CriticalSusceptibles, Curve, NonPositiveS,
                        OutsideTriangle, Zone, classify, critical_susceptibles,
                        curve_value, phi0, phi_max, psi0)

__version__ = "0.1.0"
