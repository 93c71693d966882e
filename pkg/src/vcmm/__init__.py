"""MM algorithms for variance component estimation and selection in the
logistic linear mixed model."""

from .model import (
    FitConfig,
    Formulation,
    LaplaceState,
    ModelParams,
    ProblemData,
    complete_loglik,
    laplace_loglik,
    logistic,
)
from .penalized import (
    RegPath,
    compute_path,
    default_lambda_grid,
    fit_penalized,
    lambda_max,
    soft_threshold,
    update_sigma_lasso,
)
from .simulate import (
    AnovaDesign,
    GeneticDesign,
    SelectionMetrics,
    genetic_setting_sigma2,
    replicate_seed,
    selection_metrics,
    simulate_anova,
    simulate_genetic,
)
from .solver import (
    FitResult,
    InnerConvergenceError,
    fit,
    solve_u,
    update_beta,
    update_sigma2_f1,
    update_sigma_f2,
)

__all__ = [
    "AnovaDesign",
    "FitConfig",
    "FitResult",
    "Formulation",
    "GeneticDesign",
    "InnerConvergenceError",
    "LaplaceState",
    "ModelParams",
    "ProblemData",
    "RegPath",
    "SelectionMetrics",
    "complete_loglik",
    "compute_path",
    "default_lambda_grid",
    "fit",
    "fit_penalized",
    "genetic_setting_sigma2",
    "lambda_max",
    "laplace_loglik",
    "logistic",
    "replicate_seed",
    "selection_metrics",
    "simulate_anova",
    "simulate_genetic",
    "soft_threshold",
    "solve_u",
    "update_beta",
    "update_sigma2_f1",
    "update_sigma_f2",
]

__version__ = "0.1.0"
