"""scikit-learn compatible front end for the quantile forest."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_features, check_xy
from .ensemble import check_taus, conditional_cdf, fit_forest
from .importance import permutation_importance
from .tree import TrainConfig

__all__ = ["QuantileForestRegressor"]


class QuantileForestRegressor(RegressorMixin, BaseEstimator):
    """Quantile regression forest.

    Parameters
    ----------
    quantiles : float or sequence of float, default=0.5
        Levels returned by :meth:`predict`.
    n_trees : int, default=100
    mtry : int or None, default=None
        Features tried per split; ``None`` means ``max(1, p // 3)``.
    min_node_size : int, default=5
    max_depth : int or None, default=None
    bootstrap_fraction : float, default=1.0
    bootstrap : bool, default=True
    random_state : int, default=0
    n_jobs : int, default=1
    """

    def __init__(self, quantiles=0.5, n_trees=100, mtry=None, min_node_size=5,
                 max_depth=None, bootstrap_fraction=1.0, bootstrap=True,
                 random_state=0, n_jobs=1):
        self.quantiles = quantiles
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.bootstrap_fraction = bootstrap_fraction
        self.bootstrap = bootstrap
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        return TrainConfig(n_trees=self.n_trees, mtry=self.mtry,
                           min_node_size=self.min_node_size,
                           max_depth=self.max_depth,
                           bootstrap_fraction=self.bootstrap_fraction,
                           seed=self.random_state, bootstrap=self.bootstrap)

    def fit(self, X, y, sample_weight=None, groups=None):
        X, y, names = check_xy(X, y)
        self.forest_ = fit_forest(X, y, case_weights=sample_weight,
                                  config=self._config(), feature_names=names,
                                  groups=groups, n_jobs=self.n_jobs)
        self.n_features_in_ = X.shape[1]
        self.feature_names_ = names
        return self

    def predict(self, X, quantiles=None):
        """Conditional quantiles; 1-d for a scalar level, else ``(n, k)``."""
        check_is_fitted(self, "forest_")
        X = check_features(X, self.n_features_in_)
        levels = self.quantiles if quantiles is None else quantiles
        q = self.forest_.quantiles(X, check_taus(levels))
        return q[:, 0] if np.ndim(levels) == 0 else q

    def oob_predict(self, X, quantiles=None):
        """Out-of-bag quantiles of the training rows ``X`` (NaN if never OOB)."""
        check_is_fitted(self, "forest_")
        X = check_features(X, self.n_features_in_)
        levels = self.quantiles if quantiles is None else quantiles
        q = self.forest_.quantiles(X, check_taus(levels), oob=True)
        return q[:, 0] if np.ndim(levels) == 0 else q

    def conditional_cdf(self, x):
        check_is_fitted(self, "forest_")
        return conditional_cdf(self.forest_, x)

    def permutation_importance(self, X, y, tau=None, n_repeats=5, seed=0):
        check_is_fitted(self, "forest_")
        tau = self.quantiles if tau is None else tau
        return permutation_importance(self.forest_, X, y, tau=tau,
                                      n_repeats=n_repeats, seed=seed)

    def score(self, X, y, sample_weight=None):
        """Negative mean check loss at the first configured level."""
        from ..evaluation import quantile_loss
        tau = float(np.atleast_1d(self.quantiles)[0])
        pred = self.predict(X, quantiles=tau)
        return -quantile_loss(y, pred, tau)
