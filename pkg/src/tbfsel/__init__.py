"""Objective Bayesian variable and function selection for GLMs and Cox
models, driven by deviance-based (test-based) Bayes factors."""

from .bayes_factors import (
    BFResult,
    GPriorSpec,
    dbf_linear,
    global_eb,
    leb_shrinkage,
    local_eb_g,
    max_dbf_linear,
    max_tbf,
    min_bf_identities,
    post_mode_shrinkage,
    tbf_bias_correction,
    tbf_fixed_g,
    tbf_incig,
    tbf_nonconjugate,
)
from .data import Covariate, Dataset, make_dataset
from .fitting import (
    CenteredDesign,
    FitSummary,
    center_design,
    fit_cox,
    fit_glm,
    fit_model,
    fit_null,
)
from .ic_weights import ICWeighting, ic_weights
from .io import ColumnSpec, ingest_csv
from .modelspec import FP_POWERS, ModelSpec, fp_transform
from .posterior import (
    CoefficientDraws,
    GPosterior,
    breslow_baseline,
    incig_cdf,
    incig_quantile,
    predict_bma,
    predict_glm,
    sample_coefficients,
    sample_g,
    survival_curves,
)
from .selection import (
    ModelPosterior,
    ModelPrior,
    Selection,
    enumerate_models,
    log_model_prior,
    select_bma,
    select_map,
    select_mpm,
    stochastic_search,
)
from .validation import (
    BootstrapReport,
    ScoreReport,
    auc,
    bootstrap_cv,
    calibration_slope,
    log_score,
    score_predictions,
    tbf_strategy,
)

__version__ = "0.1.0"

__all__ = [
    "BFResult",
    "BootstrapReport",
    "CenteredDesign",
    "CoefficientDraws",
    "ColumnSpec",
    "Covariate",
    "Dataset",
    "FP_POWERS",
    "FitSummary",
    "GPosterior",
    "GPriorSpec",
    "ICWeighting",
    "ModelPosterior",
    "ModelPrior",
    "ModelSpec",
    "ScoreReport",
    "Selection",
    "auc",
    "bootstrap_cv",
    "breslow_baseline",
    "calibration_slope",
    "center_design",
    "dbf_linear",
    "enumerate_models",
    "fit_cox",
    "fit_glm",
    "fit_model",
    "fit_null",
    "fp_transform",
    "global_eb",
    "ic_weights",
    "incig_cdf",
    "incig_quantile",
    "ingest_csv",
    "leb_shrinkage",
    "local_eb_g",
    "log_model_prior",
    "log_score",
    "make_dataset",
    "max_dbf_linear",
    "max_tbf",
    "min_bf_identities",
    "post_mode_shrinkage",
    "predict_bma",
    "predict_glm",
    "sample_coefficients",
    "sample_g",
    "score_predictions",
    "select_bma",
    "select_map",
    "select_mpm",
    "stochastic_search",
    "survival_curves",
    "tbf_bias_correction",
    "tbf_fixed_g",
    "tbf_incig",
    "tbf_nonconjugate",
    "tbf_strategy",
]
