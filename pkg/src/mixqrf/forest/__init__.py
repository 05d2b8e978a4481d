from .ensemble import (QuantileForest, StepCDF, conditional_cdf, fit_forest,
                       predict_quantile, tree_rng)
from .estimator import QuantileForestRegressor
from .importance import ImportanceResult, permutation_importance
from .tree import RegressionTree, TrainConfig, fit_tree

__all__ = [
    "QuantileForest",
    "QuantileForestRegressor",
    "RegressionTree",
    "StepCDF",
    "TrainConfig",
    "ImportanceResult",
    "conditional_cdf",
    "fit_forest",
    "fit_tree",
    "permutation_importance",
    "predict_quantile",
    "tree_rng",
]
