"""Joint optimal control and actuator design for semi-linear beam and
wave models, with exact discrete-adjoint gradients."""

from .core_system import (
    BlowUpError,
    CostSpec,
    Discretization,
    NonContractionError,
    StepSolverError,
    TimeGrid,
    cost_eval,
    energy_inner,
    energy_norm,
    energy_series,
    imex_step,
    picard_mild_solve,
    solve_forward,
)
from .beam_model import (
    BeamActuator,
    BeamParams,
    assemble_beam,
    beam_b,
    greens_apply,
    greens_eval,
    stiffness_solve,
)
from .wave_model import (
    NonlinearityF,
    WaveActuator,
    WaveParams,
    assemble_wave,
    nonlinearity_f,
    wave_actuator,
)
from .adjoint_grad import (
    AdjointState,
    GradientReport,
    OptimalityResidual,
    adjoint_compare,
    continuous_adjoint_oracle,
    duality_check,
    gradient,
    gradient_fd_check,
    gradients_from_adjoint,
    optimality_residual,
    solve_adjoint,
    solve_linearized,
)
from .optimizer import (
    OptimRun,
    OptimizerConfig,
    ProjectionSpec,
    grid_search_r,
    optimize,
    project_r,
    project_u,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    build_problem,
    canonical_text,
    load_config,
    parse_config_text,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointState",
    "BeamActuator",
    "BeamParams",
    "BlowUpError",
    "ConfigError",
    "CostSpec",
    "Discretization",
    "ExperimentConfig",
    "GradientReport",
    "NonContractionError",
    "NonlinearityF",
    "OptimRun",
    "OptimalityResidual",
    "OptimizerConfig",
    "ProjectionSpec",
    "StepSolverError",
    "TimeGrid",
    "WaveActuator",
    "WaveParams",
    "adjoint_compare",
    "assemble_beam",
    "assemble_wave",
    "beam_b",
    "build_problem",
    "canonical_text",
    "continuous_adjoint_oracle",
    "cost_eval",
    "duality_check",
    "energy_inner",
    "energy_norm",
    "energy_series",
    "gradient",
    "gradient_fd_check",
    "gradients_from_adjoint",
    "greens_apply",
    "greens_eval",
    "grid_search_r",
    "imex_step",
    "load_config",
    "nonlinearity_f",
    "optimality_residual",
    "optimize",
    "parse_config_text",
    "picard_mild_solve",
    "project_r",
    "project_u",
    "solve_adjoint",
    "solve_forward",
    "solve_linearized",
    "stiffness_solve",
    "wave_actuator",
]
