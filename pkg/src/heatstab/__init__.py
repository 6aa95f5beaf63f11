"""Finite-dimensional boundary feedback for the 1-D heat equation with
nonlocal boundary conditions: spectrum, lifting, gains, simulation and checks."""
from .errors import *  # noqa: F401,F403
from .spectral import (
    SpectralParams, SpectralSystem, basis_matrix, build_system, choose_mode_count,
    eigenvalues, eval_basis, normalization_constant, solve_beta, solve_delta,
)
from .lifting import (
    LiftingSolution, check_unique_continuation, closed_form_inner, fixed_point_lifting,
    solve_lifting,
)
from .gains import (
    GainSet, assemble_gains, build_gains, feedback_kernel, feedback_value, select_gammas,
)
from .pde_sim import (
    ClosedLoopProblem, Nonlinearity, Trajectory, initial_data, project_coefficients,
    semilinear_basin_probe, simulate, simulate_projected_ode,
)
from .verify import DecayReport, decay_fit, run_suite
from .config import RunConfig, load_config
from .kernels import BACKEND

__version__ = "0.1.0"
