from .grids import DEFAULT_BINS, DEFAULT_THRESHOLDS, ORACLE, ErrorGrid, precompute_error_grid
from .validation import (
    SensitivityReport,
    bootstrap_median_ci,
    large_validation,
    lower_median,
    median_and_maa,
    small_validation_sensitivity,
)
from .magsac_fit import MagsacFit, fit_magsac_to_gau
from .experiments import ParityResult, consistency_experiment, parity_experiment, selectivity_experiment

__all__ = [
    "DEFAULT_BINS",
    "DEFAULT_THRESHOLDS",
    "ORACLE",
    "ErrorGrid",
    "precompute_error_grid",
    "SensitivityReport",
    "large_validation",
    "small_validation_sensitivity",
    "median_and_maa",
    "lower_median",
    "bootstrap_median_ci",
    "MagsacFit",
    "fit_magsac_to_gau",
    "selectivity_experiment",
    "consistency_experiment",
    "ParityResult",
    "parity_experiment",
]
