"""Tensor-compressed reduced-order models for multi-parameter parabolic PDEs.

Pipeline: full-order finite-element solves on a parameter grid fill a
snapshot tensor; a tensor-train decomposition compresses it; Lagrange
weight vectors contracted with the parameter cores interpolate local
coefficient matrices at out-of-sample parameters; their singular vectors
span parameter-specific reduced bases for Galerkin time stepping.
"""

from .errors import (
    AssemblyError,
    BudgetError,
    ConfigError,
    DomainError,
    FormatError,
    GeometryError,
    LrtdRomError,
    SolverError,
)
from .fem import (
    BoundaryTag,
    FomTrajectory,
    Mesh2D,
    ProblemSpec,
    TimeGrid,
    advdiff_problem,
    advection_field,
    assemble_h1_gram,
    assemble_load,
    assemble_mass,
    assemble_operator,
    assemble_stiffness,
    backward_euler_solve,
    boundary_load,
    boundary_mass,
    build_mesh,
    heat_problem,
    initial_state,
    solve_fom,
    source_values,
)
from .interp import (
    InterpolationScheme,
    WeightVector,
    interpolate,
    lagrange_weights,
    weight_vectors,
)
from .rom import (
    LocalBasis,
    RomTrajectory,
    correlation_spectrum,
    local_basis,
    pod_basis,
    rom_solve,
    tail_energy,
    trajectory_error_sq,
)
from .study import (
    CSV_HEADER,
    FomCache,
    SlopeFit,
    StudyConfig,
    StudyResult,
    StudyRow,
    TestSetSpec,
    exclude_plateau,
    grid_counts_for_delta,
    load_config,
    parse_config,
    run_study,
    slope_fit,
)
from .tensors import (
    ParameterGrid,
    frobenius_norm,
    generate_snapshots,
    load_tensor,
    max_trajectory_norm,
    mode_product,
    resolve_memory_budget,
    save_tensor,
    spectral_norm,
    unfold_first_mode,
    uniform_grid,
)
from .tt import (
    CompressionReport,
    TTTensor,
    frobenius_tolerance,
    interpolate_coefficients,
    interpolate_snapshots,
    load_tt,
    save_tt,
    tt_svd,
    tt_to_full,
    universal_basis,
)

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "BudgetError",
    "ConfigError",
    "DomainError",
    "FormatError",
    "GeometryError",
    "LrtdRomError",
    "SolverError",
    "BoundaryTag",
    "FomTrajectory",
    "Mesh2D",
    "ProblemSpec",
    "TimeGrid",
    "advdiff_problem",
    "advection_field",
    "assemble_h1_gram",
    "assemble_load",
    "assemble_mass",
    "assemble_operator",
    "assemble_stiffness",
    "backward_euler_solve",
    "boundary_load",
    "boundary_mass",
    "build_mesh",
    "heat_problem",
    "initial_state",
    "solve_fom",
    "source_values",
    "InterpolationScheme",
    "WeightVector",
    "interpolate",
    "lagrange_weights",
    "weight_vectors",
    "LocalBasis",
    "RomTrajectory",
    "correlation_spectrum",
    "local_basis",
    "pod_basis",
    "rom_solve",
    "tail_energy",
    "trajectory_error_sq",
    "CSV_HEADER",
    "FomCache",
    "SlopeFit",
    "StudyConfig",
    "StudyResult",
    "StudyRow",
    "TestSetSpec",
    "exclude_plateau",
    "grid_counts_for_delta",
    "load_config",
    "parse_config",
    "run_study",
    "slope_fit",
    "ParameterGrid",
    "frobenius_norm",
    "generate_snapshots",
    "load_tensor",
    "max_trajectory_norm",
    "mode_product",
    "resolve_memory_budget",
    "save_tensor",
    "spectral_norm",
    "unfold_first_mode",
    "uniform_grid",
    "CompressionReport",
    "TTTensor",
    "frobenius_tolerance",
    "interpolate_coefficients",
    "interpolate_snapshots",
    "load_tt",
    "save_tt",
    "tt_svd",
    "tt_to_full",
    "universal_basis",
    "__version__",
]
