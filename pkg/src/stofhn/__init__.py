"""Path-wise solvers and bound-constrained optimal control for an excitable
reaction-diffusion model with monotone nonlinear diffusion and linear
multiplicative noise.

The stochastic dynamics are integrated through the pointwise substitution
X = exp(W) y, which turns the noise into random coefficients of a PDE for y;
the control layer differentiates the discrete solver exactly and descends the
tracking cost by projected gradients.
"""

__version__ = "0.1.0"

from .control import (
    AdjointSolution,
    BangBangResult,
    ControlField,
    ControlProblem,
    OptimizerParams,
    OptimizerReport,
    bang_bang_refine,
    cost_psi,
    gradient_field,
    optimize,
    project_control,
    solve_adjoint,
    solve_all_forward,
    solve_variation,
)
from .errors import ConfigurationError, NumericError, StofhnError, VerificationFailure
from .grid import (
    EigenPair,
    ScalarField,
    SpatialGrid,
    discrete_laplacian,
    inner_l2,
    laplacian_eigenpairs,
    norm_hminus1,
    norm_l2,
    norm_linf,
    poisson_solve,
)
from .noise import (
    MollifierSpec,
    NoiseModel,
    WienerPath,
    evaluate_W,
    exp_W,
    ito_correction_field,
    mollify_path,
    noise_history,
    sample_path,
    uniform_time_grid,
)
from .nonlinearity import (
    DiffusionLaw,
    IonicCubic,
    YosidaParam,
    gamma_eval,
    gamma_prime,
    ionic_eval,
    ionic_prime,
    resolvent_G,
    yosida_G,
)
from .solver import (
    StateProblem,
    StateSolution,
    StepperParams,
    scalar_sde_oracle,
    solve_forward,
    step_rescaled,
    strong_solution_residual,
)

__all__ = [
    "AdjointSolution",
    "BangBangResult",
    "ConfigurationError",
    "ControlField",
    "ControlProblem",
    "DiffusionLaw",
    "EigenPair",
    "IonicCubic",
    "MollifierSpec",
    "NoiseModel",
    "NumericError",
    "OptimizerParams",
    "OptimizerReport",
    "ScalarField",
    "SpatialGrid",
    "StateProblem",
    "StateSolution",
    "StepperParams",
    "StofhnError",
    "VerificationFailure",
    "WienerPath",
    "YosidaParam",
    "bang_bang_refine",
    "cost_psi",
    "discrete_laplacian",
    "evaluate_W",
    "exp_W",
    "gamma_eval",
    "gamma_prime",
    "gradient_field",
    "inner_l2",
    "ionic_eval",
    "ionic_prime",
    "ito_correction_field",
    "laplacian_eigenpairs",
    "mollify_path",
    "noise_history",
    "norm_hminus1",
    "norm_l2",
    "norm_linf",
    "optimize",
    "poisson_solve",
    "project_control",
    "resolvent_G",
    "sample_path",
    "scalar_sde_oracle",
    "solve_adjoint",
    "solve_all_forward",
    "solve_forward",
    "solve_variation",
    "step_rescaled",
    "strong_solution_residual",
    "uniform_time_grid",
    "yosida_G",
]
