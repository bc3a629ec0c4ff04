"""Numerical laboratory for filtered channel, pipe, and torus flows.

Modules:
    operators1d        grids, banded solver, second-order 1-D operators
    steady_profiles    covariance-amplitude BVPs and closed-form profiles
    covariance         Lagrangian covariance evolution and spectra
    channel_evolution  Crank-Nicolson wall-normal evolution
    torus_isotropic    pseudo-spectral periodic solver (2-D/3-D)
    cli                the `lans` command line
"""

from .operators1d import (
    CHANNEL,
    PIPE,
    BandedSystem,
    Grid1D,
    GridFunction1D,
    PhysicalParams,
    SingularBandedError,
    diffusion_operator,
    make_grid,
    mass_operator,
    solve_banded,
)
from .steady_profiles import (
    BracketError,
    BvpReport,
    RhoProfile,
    SolverError,
    channel_rho_residual,
    graded_channel_grid,
    graded_pipe_grid,
    pipe_rho_residual,
    poiseuille_velocity,
    shear_identity_residual,
    shear_rho_closed_form,
    shear_velocity,
    solve_channel_rho_collocation,
    solve_channel_rho_shooting,
    solve_pipe_rho,
)
from .channel_evolution import (
    ChannelOperators,
    ChannelState,
    ConvergenceReport,
    LiftedProblem,
    SingularSystemError,
    channel_operators,
    discrete_energy,
    make_lifting,
    run_to_steady,
    steady_velocity,
    step,
    temporal_order_check,
)
from .covariance import (
    CovarianceField,
    DecayFit,
    EigenTriple,
    GrowthBoundReport,
    SupNormSeries,
    boundary_decay_fit,
    covariance_at,
    covariance_field,
    eigenvalues_closed_form,
    eigenvalues_numeric,
    f_evolution_residual,
    f_growth_bound_check,
    jacobi_eigenvalues,
    sup_norm_trajectory,
    tensor_from_scalars,
)
from .torus_isotropic import (
    AlphaLimitStudy,
    EnergyLedger,
    SpectralState,
    TorusWorkspace,
    alpha_limit_study,
    dissipation_rate,
    e1_energy,
    energy_balance_check,
    forcing_work,
    helmholtz_invert,
    leray_project,
    make_state,
    random_divfree_state,
    read_snapshot,
    rhs_lans1,
    rhs_lans2,
    run_with_ledger,
    step_imex,
    taylor_green_state,
    u_alpha_term,
    write_snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "CHANNEL",
    "PIPE",
    "BandedSystem",
    "Grid1D",
    "GridFunction1D",
    "PhysicalParams",
    "SingularBandedError",
    "diffusion_operator",
    "make_grid",
    "mass_operator",
    "solve_banded",
    "BracketError",
    "BvpReport",
    "RhoProfile",
    "SolverError",
    "channel_rho_residual",
    "graded_channel_grid",
    "graded_pipe_grid",
    "pipe_rho_residual",
    "poiseuille_velocity",
    "shear_identity_residual",
    "shear_rho_closed_form",
    "shear_velocity",
    "solve_channel_rho_collocation",
    "solve_channel_rho_shooting",
    "solve_pipe_rho",
    "ChannelOperators",
    "ChannelState",
    "ConvergenceReport",
    "LiftedProblem",
    "SingularSystemError",
    "channel_operators",
    "discrete_energy",
    "make_lifting",
    "run_to_steady",
    "steady_velocity",
    "step",
    "temporal_order_check",
    "CovarianceField",
    "DecayFit",
    "EigenTriple",
    "GrowthBoundReport",
    "SupNormSeries",
    "boundary_decay_fit",
    "covariance_at",
    "covariance_field",
    "eigenvalues_closed_form",
    "eigenvalues_numeric",
    "f_evolution_residual",
    "f_growth_bound_check",
    "jacobi_eigenvalues",
    "sup_norm_trajectory",
    "tensor_from_scalars",
    "AlphaLimitStudy",
    "EnergyLedger",
    "SpectralState",
    "TorusWorkspace",
    "alpha_limit_study",
    "dissipation_rate",
    "e1_energy",
    "energy_balance_check",
    "forcing_work",
    "helmholtz_invert",
    "leray_project",
    "make_state",
    "random_divfree_state",
    "read_snapshot",
    "rhs_lans1",
    "rhs_lans2",
    "run_with_ledger",
    "step_imex",
    "taylor_green_state",
    "u_alpha_term",
    "write_snapshot",
    "__version__",
]
