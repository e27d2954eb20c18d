"""Bayesian optimization over mixed continuous/categorical design spaces.

The surrogate is a Gaussian process whose qualitative factors are embedded
into learned 2-D latent coordinates, so one correlation function covers both
variable kinds.  Sequential sampling maximizes expected improvement.
"""

from .space import (
    Dataset,
    DesignSpace,
    MixedPoint,
    QualSpec,
    QuantSpec,
    SpaceBuilder,
    ValidationError,
    denormalize,
    normalize,
    validate_point,
)
from .kernel import (
    CorrMatrixFactor,
    FactorizationError,
    KernelParams,
    build_corr_matrix,
    correlation,
    cross_corr_vector,
)
from .model import (
    FitConfig,
    FitFailedError,
    FittedModel,
    LVGPParams,
    LVGPRegressor,
    export_latents,
    fit,
    model_from_params,
    neg_profiled_loglik,
    predict,
    predict_batch,
    profiled_mu_sigma2,
)
from .acquisition import (
    AcquisitionConfig,
    ExhaustedSpaceError,
    expected_improvement,
    incumbent_value,
    propose_next,
)
from .engine import (
    BudgetExhaustedError,
    Campaign,
    CampaignConfig,
    Objective,
    initial_design,
    maximin_lhs,
    run,
)
from .benchmarks import (
    TabularObjective,
    branin_mixed,
    branin_objective,
    branin_space,
    exhaustive_oracle,
    goldstein_price_mixed,
    goldstein_price_objective,
    goldstein_price_space,
    load_tabular,
    noisy_wrapper,
    synthetic_tabular_path,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "BudgetExhaustedError",
    "Campaign",
    "CampaignConfig",
    "CorrMatrixFactor",
    "Dataset",
    "DesignSpace",
    "ExhaustedSpaceError",
    "FactorizationError",
    "FitConfig",
    "FitFailedError",
    "FittedModel",
    "KernelParams",
    "LVGPParams",
    "LVGPRegressor",
    "MixedPoint",
    "Objective",
    "QualSpec",
    "QuantSpec",
    "SpaceBuilder",
    "TabularObjective",
    "ValidationError",
    "branin_mixed",
    "branin_objective",
    "branin_space",
    "build_corr_matrix",
    "correlation",
    "cross_corr_vector",
    "denormalize",
    "exhaustive_oracle",
    "expected_improvement",
    "export_latents",
    "fit",
    "goldstein_price_mixed",
    "goldstein_price_objective",
    "goldstein_price_space",
    "incumbent_value",
    "initial_design",
    "load_tabular",
    "maximin_lhs",
    "model_from_params",
    "neg_profiled_loglik",
    "noisy_wrapper",
    "normalize",
    "predict",
    "predict_batch",
    "profiled_mu_sigma2",
    "propose_next",
    "run",
    "synthetic_tabular_path",
    "validate_point",
]
