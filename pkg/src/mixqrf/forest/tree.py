"""CART regression trees grown on the weighted sum-of-squares criterion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidConfigError, InvalidInputError
from . import _kernels

__all__ = ["TrainConfig", "RegressionTree", "fit_tree"]


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters shared by a tree and the forest that grows it.

    ``mtry=None`` tries ``max(1, p // 3)`` features per split. Setting
    ``bootstrap=False`` grows every tree on the full sample (test hook).
    """

    n_trees: int = 100
    mtry: int | None = None
    min_node_size: int = 5
    max_depth: int | None = None
    bootstrap_fraction: float = 1.0
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise InvalidConfigError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise InvalidConfigError("mtry must be >= 1")
        if self.min_node_size < 1:
            raise InvalidConfigError("min_node_size must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidConfigError("max_depth must be nonnegative")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise InvalidConfigError("bootstrap_fraction must lie in (0, 1]")

    def resolved_mtry(self, p):
        if self.mtry is None:
            return max(1, p // 3)
        if self.mtry > p:
            raise InvalidConfigError(f"mtry={self.mtry} exceeds p={p}")
        return int(self.mtry)


@dataclass
class RegressionTree:
    """Flat-array binary tree.

    Internal nodes have ``feature >= 0``. Leaf ``m`` owns the training rows
    ``samples[leaf_start[m]:leaf_end[m]]`` with atom weights
    ``sample_weight`` in the same positions.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_start: np.ndarray
    leaf_end: np.ndarray
    samples: np.ndarray
    sample_weight: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    def is_leaf(self):
        return self.feature < 0

    def leaf_weight(self):
        """Total atom weight held by every node (zero for internal nodes)."""
        csum = np.concatenate([[0.0], np.cumsum(self.sample_weight)])
        out = csum[self.leaf_end] - csum[self.leaf_start]
        out[~self.is_leaf()] = 0.0
        return out

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return _kernels.apply_tree(X, self.feature, self.threshold,
                                   self.left, self.right)

    def leaf_members(self, node):
        s, e = self.leaf_start[node], self.leaf_end[node]
        return self.samples[s:e]


def _check_weights(case_weights, n):
    if case_weights is None:
        return np.ones(n)
    w = np.asarray(case_weights, dtype=float)
    if w.shape != (n,):
        raise InvalidInputError("case_weights must have one entry per row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("case_weights must be finite and nonnegative")
    if not w.sum() > 0:
        raise InvalidInputError("case_weights must not all be zero")
    return w


def _grow(X, y, w, counts, mtry, config, rng):
    inbag = np.flatnonzero(counts > 0).astype(np.int64)
    p = X.shape[1]
    if mtry < p:
        keys = rng.random((2 * inbag.size + 1, p))
    else:
        keys = np.empty((1, p))
    max_depth = -1 if config.max_depth is None else int(config.max_depth)
    row_w = w * counts
    feat, thr, lft, rgt, start, end, order = _kernels.build_tree(
        X, y, row_w, counts.astype(np.int64), inbag, int(mtry),
        int(config.min_node_size), max_depth, keys)
    leaf = feat < 0
    start = np.where(leaf, start, 0)
    end = np.where(leaf, end, 0)
    return RegressionTree(feature=feat, threshold=thr, left=lft, right=rgt,
                          leaf_start=start, leaf_end=end, samples=order,
                          sample_weight=row_w[order])


def fit_tree(X, y, case_weights=None, config=None, rng=None, counts=None):
    """Grow a single regression tree.

    Each node tries ``mtry`` features drawn without replacement and picks
    the (feature, midpoint threshold) pair with the lowest weighted child
    SSE; ties go to the lowest feature index, then the lowest threshold.
    Splitting stops when a node holds fewer than ``2 * min_node_size``
    draws, the depth limit is hit, or no split lowers the SSE.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
    case_weights : array of shape (n,), optional
    config : TrainConfig, optional
    rng : numpy.random.Generator, optional
        Source of the per-node feature draws.
    counts : array of int, optional
        Bootstrap multiplicities; rows with zero count are left out.
    """
    config = config or TrainConfig()
    X, y = _validate_xy(X, y)
    n = X.shape[0]
    w = _check_weights(case_weights, n)
    if counts is None:
        counts = np.ones(n, dtype=np.int64)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    return _grow(X, y, w, np.asarray(counts, dtype=np.int64),
                 config.resolved_mtry(X.shape[1]), config, rng)


def _validate_xy(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("X must be a 2-d array")
    if X.shape[0] == 0:
        raise InvalidInputError("empty training set")
    if y.shape != (X.shape[0],):
        raise InvalidInputError("y must have one entry per row of X")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("training data must be finite")
    return X, y
