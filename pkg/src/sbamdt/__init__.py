"""Bayesian additive decision trees with semi-multivariate splits and hard/soft gates."""

from .model import FitConfig, FittedModel, fit, predict, feature_importance
from .priors import Hyperparams

__version__ = "0.1.0"

__all__ = [
    "FitConfig",
    "FittedModel",
    "Hyperparams",
    "fit",
    "predict",
    "feature_importance",
    "__version__",
]
