"""Eigenvalue-constrained Gaussian parsimonious clustering models."""
from .constraints import ConstraintSpec, Regime, schedule_bounds, static_bounds_from_data
from .em import EmConfig, FitReport, MixtureModel, fit
from .experiment import run_convergence_experiment
from .family import CovarianceFactors, Structure, count_free_params, parse_structures
from .initialize import InitKind, make_init
from .selection import ari, bic, sweep

__version__ = "0.1.0"

__all__ = [
    "ConstraintSpec", "CovarianceFactors", "EmConfig", "FitReport", "InitKind",
    "MixtureModel", "Regime", "Structure", "ari", "bic", "count_free_params", "fit",
    "make_init", "parse_structures", "run_convergence_experiment", "schedule_bounds",
    "static_bounds_from_data", "sweep",
]
