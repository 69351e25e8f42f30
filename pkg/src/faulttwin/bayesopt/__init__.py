"""Bayesian hyperparameter search: typed spaces, GP surrogate, expected improvement."""

from .gp import GpSurrogate, expected_improvement, gp_fit, gp_predict, matern52
from .search import BayesSearcher, RandomSearcher, fit_history, history_to_csv, suggest
from .space import Categorical, Integer, LogUniform, SearchSpace, Uniform, domain_from_dict

__all__ = [
    "BayesSearcher",
    "Categorical",
    "GpSurrogate",
    "Integer",
    "LogUniform",
    "RandomSearcher",
    "SearchSpace",
    "Uniform",
    "domain_from_dict",
    "expected_improvement",
    "fit_history",
    "gp_fit",
    "gp_predict",
    "history_to_csv",
    "matern52",
    "suggest",
]
