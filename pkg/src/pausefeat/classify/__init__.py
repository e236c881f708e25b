"""Feature selection, oversampling and the transcript classifiers."""

from .models import BASE_KINDS, MODEL_KINDS, ClassifierParams, ClassifierSpec, base_predictions, ensemble_vote, fit_predict
from .selection import ALL, EXTENDING_K_GRID, ORIGINAL_K_GRID, anova_f, anova_f_columns, resolve_k, select_top_k
from .smote import oversample, smote

__all__ = [
    "ALL", "BASE_KINDS", "EXTENDING_K_GRID", "MODEL_KINDS", "ORIGINAL_K_GRID", "ClassifierParams", "ClassifierSpec",
    "anova_f", "anova_f_columns", "base_predictions", "ensemble_vote", "fit_predict", "oversample", "resolve_k",
    "select_top_k", "smote",
]
