"""Histogram gradient-boosted trees with pluggable multi-class objectives."""

from .booster import GbdtModel, TrainingState, Tree, feature_importance, fit, predict_proba
from .objective import (
    CrossEntropyObjective,
    FocalObjective,
    cross_entropy_grad_hess,
    focal_grad_hess,
    focal_loss,
    softmax,
)
from .params import GbdtParams

__all__ = [
    "CrossEntropyObjective",
    "FocalObjective",
    "GbdtModel",
    "GbdtParams",
    "TrainingState",
    "Tree",
    "cross_entropy_grad_hess",
    "feature_importance",
    "fit",
    "focal_grad_hess",
    "focal_loss",
    "predict_proba",
    "softmax",
]
