"""Numerical laboratory for the finite-temperature logarithmic Schrodinger
equation, the Markov diffusion underneath it, and the preacceleration-averaged
radiative force that ties the two together."""

__version__ = "0.1.0"

from .fields import (
    BoundaryCondition,
    Grid1D,
    Role,
    ScalarField,
    build_grid,
    gradient,
    l1_distance,
    laplacian,
    trapezoid,
)
from .params import PhysicalParams, compute_tau, gamma_from_params, nu_for_quantum_match
from .stationary import (
    EigenSolution,
    SolverOptions,
    classical_gibbs,
    quantum_potential,
    solve_linear_ground,
    solve_log_nlse_ground,
    verify_stationary_decomposition,
)
from .sde import SdeConfig, TrajectoryBatch, drift_from_density, simulate, stationary_histogram
from .kernels import TransitionKernel, ergodic_limit, evolve_forward, verify_backward
from .force import (
    ForceEstimate,
    ForceMethod,
    check_gibbs_relation,
    check_operator_identity,
    extra_potential,
    force_kernel,
    force_monte_carlo,
)
from .config import ExperimentConfig, load_config, parse_config
from .experiments import ReportBundle, emit_report, run_sweep, run_verify

__all__ = [
    "BoundaryCondition", "Grid1D", "Role", "ScalarField", "build_grid",
    "gradient", "laplacian", "trapezoid", "l1_distance",
    "PhysicalParams", "compute_tau", "gamma_from_params", "nu_for_quantum_match",
    "EigenSolution", "SolverOptions", "classical_gibbs", "quantum_potential",
    "solve_linear_ground", "solve_log_nlse_ground", "verify_stationary_decomposition",
    "SdeConfig", "TrajectoryBatch", "drift_from_density", "simulate",
    "stationary_histogram",
    "TransitionKernel", "evolve_forward", "verify_backward", "ergodic_limit",
    "ForceEstimate", "ForceMethod", "force_kernel", "force_monte_carlo",
    "check_gibbs_relation", "check_operator_identity", "extra_potential",
    "ExperimentConfig", "parse_config", "load_config",
    "ReportBundle", "run_verify", "run_sweep", "emit_report",
]
