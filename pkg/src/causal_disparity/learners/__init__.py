"""Nuisance learners, cross-fitting and honest causal trees."""

from .binning import Binner
from .crossfit import CrossFitPlan, cross_fit_predict
from .honest_tree import ArmMissingError, HonestTree, HonestTreeParams, fit_honest_tree
from .models import (
    BOOSTED, FOREST, LINEAR, LOGISTIC, SQUARED,
    DegenerateTargetWarning, FittedModel, LearnerSpec, TreeEnsemble, fit, predict,
)

__all__ = [
    "ArmMissingError", "BOOSTED", "Binner", "CrossFitPlan", "DegenerateTargetWarning", "FOREST",
    "FittedModel", "HonestTree", "HonestTreeParams", "LINEAR", "LOGISTIC", "LearnerSpec", "SQUARED",
    "TreeEnsemble", "cross_fit_predict", "fit", "fit_honest_tree", "predict",
]
