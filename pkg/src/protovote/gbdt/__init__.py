"""Regularized gradient-boosted trees (exact greedy, Newton leaves)."""

from ._backend import BACKEND, get_kernels
from .booster import (
    GbdtClassifier,
    GbdtConfig,
    GbdtModel,
    Tree,
    fit_gbdt,
    leaf_objective,
    leaf_weight,
    predict_proba,
    split_gain,
)

__all__ = [
    "BACKEND",
    "GbdtClassifier",
    "GbdtConfig",
    "GbdtModel",
    "Tree",
    "fit_gbdt",
    "get_kernels",
    "leaf_objective",
    "leaf_weight",
    "predict_proba",
    "split_gain",
]
