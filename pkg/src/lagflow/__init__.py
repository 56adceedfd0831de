"""Lagrange-multiplier energy-stable schemes for gradient flows."""

from .adaptive import AdaptiveParams, adapt_step, run_adaptive
from .config import ConfigError, RunConfig, format_config, parse_config
from .convergence import ConvergenceTable, convergence_study, observed_orders
from .diagnostics import energy_report, linf_error, mass, modified_energy
from .integrators import (
    StepFailure,
    StepperState,
    TrajectoryRecord,
    initial_state,
    run_fixed,
    step_bdf2,
    step_be1,
    step_cn,
)
from .models import (
    COUPLED_MANUFACTURED,
    SCALAR_MANUFACTURED,
    CoupledModel,
    ScalarModel,
    exact_solution,
    forcing_for,
)
from .multiplier import EtaSolveError, NonConvergence, NonFiniteIterate, build_eta_equation, solve_eta
from .output import read_snapshot, write_energy_csv, write_pgm, write_snapshot
from .rng import seeded_random_field
from .spectral import Grid, make_grid

__version__ = "0.1.0"

__all__ = [
    "AdaptiveParams", "adapt_step", "run_adaptive",
    "ConfigError", "RunConfig", "format_config", "parse_config",
    "ConvergenceTable", "convergence_study", "observed_orders",
    "energy_report", "linf_error", "mass", "modified_energy",
    "StepFailure", "StepperState", "TrajectoryRecord", "initial_state", "run_fixed",
    "step_bdf2", "step_be1", "step_cn",
    "COUPLED_MANUFACTURED", "SCALAR_MANUFACTURED", "CoupledModel", "ScalarModel",
    "exact_solution", "forcing_for",
    "EtaSolveError", "NonConvergence", "NonFiniteIterate", "build_eta_equation", "solve_eta",
    "read_snapshot", "write_energy_csv", "write_pgm", "write_snapshot",
    "seeded_random_field", "Grid", "make_grid",
]
