"""Gamma mixed models and the Wilcoxon signed-rank test."""

from .design import (
    FIXED_PREDICTORS,
    DesignMatrix,
    ModelFormula,
    build_design_matrix,
    interaction_name,
    response_vector,
)
from .glm import Coefficient, GlmFit, compare_links, fit_arrays, fit_gamma_glm, gamma_log_likelihood, score_residual
from .wilcoxon import WilcoxonResult, wilcoxon_signed_rank

__all__ = [
    "FIXED_PREDICTORS", "DesignMatrix", "ModelFormula", "build_design_matrix", "interaction_name",
    "response_vector", "Coefficient", "GlmFit", "compare_links", "fit_arrays", "fit_gamma_glm",
    "gamma_log_likelihood", "score_residual", "WilcoxonResult", "wilcoxon_signed_rank",
]
