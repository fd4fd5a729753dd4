"""Quantile-based randomized Kaczmarz for linear systems whose right-hand
side has a sparse set of arbitrarily corrupted entries."""

__version__ = "0.1.0"

from .corruption import CorruptedSystem, CorruptionSpec, corrupt, generate_gaussian_system, load_system, save_system
from .linalg import normalize_rows, quantile_select, residuals, sigma_max, sigma_min
from .solvers import (
    ConvergenceTrace,
    SolverConfig,
    exact_step_expectation,
    project_step,
    run_solver,
    select_motzkin,
    select_powered,
    select_quantile,
    select_quantile_sampled,
    select_uniform,
)
from .spectral import (
    condition_lhs,
    convergence_rate,
    corollary_threshold,
    heuristic_alpha,
    heuristic_ratio,
    sigma_subset_extremal,
    spectral_summary,
)
