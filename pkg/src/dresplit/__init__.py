"""Splitting-based solver and convergence laboratory for Galerkin
differential Riccati equations on the periodic unit square."""

from .convergence import (
    ConvergenceReport,
    InjectionOperator,
    StudyEntry,
    build_injection,
    err_tau_h,
    extend_kernel,
    observed_order,
    operator_norm_L2,
    run_study,
)
from .fem import (
    GalerkinDRE,
    PeriodicMesh,
    assemble_half_domain,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    build_mesh,
    build_problem,
    get_field,
)
from .linalg import cholesky, expm, lyapunov_solve, spectral_norm, symmetrize, vanloan_flow
from .solver import (
    LieStepPrecomp,
    SpectralStepper,
    Trajectory,
    lie_step,
    nonlinear_flow,
    precompute_lie_step,
    regularized_initial,
    rk4_reference,
    scalar_riccati_closed_form,
    solve,
    solve_transformed,
    transformed_nonlinear_flow,
)

__version__ = "0.1.0"
