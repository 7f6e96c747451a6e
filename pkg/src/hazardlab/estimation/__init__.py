"""Parametric and Cox survival regression."""

from .cox import CoxTerms, cox_terms
from .fitting import (
    HazardPeakError,
    PredictionError,
    acceleration_factor,
    fit,
    fit_cox,
    fit_mle,
    hazard_peak,
    initial_params,
    parameter_link_fit,
    predict,
    robust_covariance,
    sandwich,
)
from .likelihood import NonFiniteLikelihood, build_design, loglik, obs_loglik, obs_scores, score_hessian
from .model import (
    COX,
    FitResult,
    Frailty,
    Metric,
    ModelSpec,
    ParamLayout,
    ParamVector,
    SurvivalData,
    survival_data,
)
from .newton import NewtonResult, SingularHessianError, newton_raphson

__all__ = [
    "COX", "CoxTerms", "FitResult", "Frailty", "HazardPeakError", "Metric", "ModelSpec", "NewtonResult",
    "NonFiniteLikelihood", "ParamLayout", "ParamVector", "PredictionError", "SingularHessianError", "SurvivalData",
    "acceleration_factor", "build_design", "cox_terms", "fit", "fit_cox", "fit_mle", "hazard_peak", "initial_params",
    "loglik", "newton_raphson", "obs_loglik", "obs_scores", "parameter_link_fit", "predict", "robust_covariance",
    "sandwich", "score_hessian", "survival_data",
]
