"""Quantile regression forests: bagged CART trees with leaf-level atoms."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from joblib import Parallel, delayed

from ..exceptions import InvalidInputError
from . import _kernels
from .tree import RegressionTree, TrainConfig, _check_weights, _grow, _validate_xy

__all__ = [
    "QuantileForest",
    "StepCDF",
    "fit_forest",
    "conditional_cdf",
    "predict_quantile",
    "tree_rng",
]


def tree_rng(seed, b):
    """Independent generator for tree ``b``; scheduling cannot change it."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(b)])


def check_taus(taus):
    arr = np.atleast_1d(np.asarray(taus, dtype=float))
    if arr.size == 0 or np.any(~(arr > 0)) or np.any(~(arr < 1)):
        raise InvalidInputError("quantile levels must lie in (0, 1)")
    return arr


@dataclass
class StepCDF:
    """Right-continuous weighted empirical CDF."""

    atoms: np.ndarray
    cumulative: np.ndarray

    def __call__(self, y):
        k = np.searchsorted(self.atoms, y, side="right")
        padded = np.concatenate([[0.0], self.cumulative])
        return padded[k]

    def quantile(self, tau):
        tau = float(check_taus(tau)[0])
        k = int(np.argmax(self.cumulative >= tau - _kernels.CDF_TOL))
        if self.cumulative[k] < tau - _kernels.CDF_TOL:
            k = self.atoms.size - 1
        return float(self.atoms[k])


@dataclass
class QuantileForest:
    trees: list
    train_outcomes: np.ndarray
    train_weights: np.ndarray
    oob_masks: np.ndarray
    config: TrainConfig
    feature_names: list = field(default_factory=list)

    @property
    def n_features(self):
        return len(self.feature_names)

    @property
    def n_trees(self):
        return len(self.trees)

    @cached_property
    def _packed(self):
        trees = self.trees
        node_counts = [t.n_nodes for t in trees]
        sample_counts = [t.samples.size for t in trees]
        node_offset = np.concatenate([[0], np.cumsum(node_counts)]).astype(np.int64)
        order_offset = np.concatenate([[0], np.cumsum(sample_counts)]).astype(np.int64)
        y = self.train_outcomes
        sort_idx = np.argsort(y, kind="stable")
        rank = np.empty_like(sort_idx)
        rank[sort_idx] = np.arange(y.size)
        return dict(
            node_offset=node_offset,
            leaf_start=np.concatenate([t.leaf_start for t in trees]),
            leaf_end=np.concatenate([t.leaf_end for t in trees]),
            order_offset=order_offset,
            order_idx=np.concatenate([t.samples for t in trees]),
            order_w=np.concatenate([t.sample_weight for t in trees]),
            node_w=np.concatenate([t.leaf_weight() for t in trees]),
            rank=rank.astype(np.int64),
            sort_idx=sort_idx,
            y_sorted=y[sort_idx],
        )

    def _check_X(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise InvalidInputError(
                f"expected {self.n_features} covariates, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("covariates must be finite")
        return X

    def apply(self, X):
        """Leaf index reached in every tree, shape ``(n_rows, n_trees)``."""
        X = self._check_X(X)
        out = np.empty((X.shape[0], self.n_trees), dtype=np.int64)
        for b, tree in enumerate(self.trees):
            out[:, b] = tree.apply(X)
        return out

    def _query_args(self, X, oob, rows=None):
        leaves = self.apply(X)
        if oob:
            masks = self.oob_masks if rows is None else self.oob_masks[:, rows]
            if leaves.shape[0] != masks.shape[1]:
                raise InvalidInputError("out-of-bag queries need the training rows")
            mask = np.ascontiguousarray(masks.T)
        else:
            mask = np.ones((1, 1), dtype=bool)
        pk = self._packed
        return (leaves, mask, bool(oob), pk["node_offset"], pk["leaf_start"],
                pk["leaf_end"], pk["order_offset"], pk["order_idx"],
                pk["order_w"], pk["node_w"], pk["rank"])

    def weights(self, X, oob=False):
        """Atom weights on the training outcomes (original row order)."""
        args = self._query_args(X, oob)
        w_sorted = _kernels.forest_weights(*args, self.train_outcomes.size)
        out = np.empty_like(w_sorted)
        out[:, self._packed["sort_idx"]] = w_sorted
        return out

    def quantiles(self, X, taus, oob=False, rows=None):
        """Conditional quantiles, shape ``(n_rows, len(taus))``.

        With ``oob=True`` each training row only uses the trees for which it
        was out of bag; rows that were never out of bag come back NaN.
        ``rows`` restricts an out-of-bag query to those training rows, in
        which case ``X`` holds just their covariates.
        """
        taus = check_taus(taus)
        order = np.argsort(taus, kind="stable")
        if rows is not None:
            rows = np.asarray(rows, dtype=np.int64)
        args = self._query_args(X, oob, rows)
        q = _kernels.forest_quantiles(*args, self._packed["y_sorted"],
                                      np.ascontiguousarray(taus[order]))
        out = np.empty_like(q)
        out[:, order] = q
        return out

    def predict(self, X, tau=0.5):
        return self.quantiles(X, [tau])[:, 0]


def _bootstrap_counts(n, config, rng, groups):
    if not config.bootstrap:
        return np.ones(n, dtype=np.int64)
    if groups is None:
        size = int(np.ceil(config.bootstrap_fraction * n))
        draws = rng.integers(0, n, size=size)
        return np.bincount(draws, minlength=n).astype(np.int64)
    codes, inverse = np.unique(groups, return_inverse=True)
    g = codes.size
    size = int(np.ceil(config.bootstrap_fraction * g))
    draws = rng.integers(0, g, size=size)
    return np.bincount(draws, minlength=g)[inverse].astype(np.int64)


def _fit_one(X, y, w, config, mtry, b, groups):
    rng = tree_rng(config.seed, b)
    counts = _bootstrap_counts(X.shape[0], config, rng, groups)
    return _grow(X, y, w, counts, mtry, config, rng), counts == 0


def fit_forest(X, y, case_weights=None, config=None, feature_names=None,
               groups=None, n_jobs=1):
    """Fit a quantile regression forest.

    Tree ``b`` is grown on a bootstrap resample of size
    ``ceil(bootstrap_fraction * n)`` drawn with a generator seeded by
    ``(seed, b)``, so the result does not depend on ``n_jobs``.

    Parameters
    ----------
    groups : array of shape (n,), optional
        Resample whole groups instead of rows; rows of a group are always
        in bag (or out of bag) together. Used for replicated training sets
        where the copies share covariates.
    """
    config = config or TrainConfig()
    X, y = _validate_xy(X, y)
    n, p = X.shape
    w = _check_weights(case_weights, n)
    mtry = config.resolved_mtry(p)
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape != (n,):
            raise InvalidInputError("groups must have one entry per row")

    if n_jobs == 1:
        results = [_fit_one(X, y, w, config, mtry, b, groups)
                   for b in range(config.n_trees)]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_fit_one)(X, y, w, config, mtry, b, groups)
            for b in range(config.n_trees))
    trees = [r[0] for r in results]
    oob = np.vstack([r[1] for r in results])
    names = list(feature_names) if feature_names is not None else [
        f"x{j}" for j in range(p)]
    if len(names) != p:
        raise InvalidInputError("feature_names length does not match X")
    return QuantileForest(trees=trees, train_outcomes=y.copy(),
                          train_weights=w.copy(), oob_masks=oob,
                          config=config, feature_names=names)


def conditional_cdf(forest, x):
    """Weighted empirical CDF of the outcome at covariate vector ``x``.

    Every tree contributes ``1/B`` spread over the atoms of the leaf that
    ``x`` falls in, in proportion to their (case x bootstrap) weights.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("x must be a single covariate vector")
    w = forest.weights(x[None, :])[0]
    y = forest.train_outcomes
    keep = w > 0
    atoms, inverse = np.unique(y[keep], return_inverse=True)
    mass = np.bincount(inverse, weights=w[keep], minlength=atoms.size)
    return StepCDF(atoms=atoms, cumulative=np.cumsum(mass))


def predict_quantile(forest, x, tau):
    """``inf{y : F(y | x) >= tau}`` on the forest's step CDF."""
    tau = check_taus(tau)
    if tau.size != 1:
        raise InvalidInputError("predict_quantile takes a single level")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError("x must be a single covariate vector")
    return float(forest.quantiles(x[None, :], tau)[0, 0])
