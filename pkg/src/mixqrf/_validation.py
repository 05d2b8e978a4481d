"""Input validation helpers for the estimator front ends."""

import numpy as np

from .exceptions import InvalidInputError


def _names_of(X):
    cols = getattr(X, "columns", None)
    if cols is None:
        return None
    return [str(c) for c in cols]


def check_xy(X, y):
    """Return float arrays ``(X, y)`` plus feature names.

    Accepts anything array-like; pandas column names are kept.
    """
    names = _names_of(X)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("X must be a non-empty 2-d array")
    if y.shape[0] != X.shape[0]:
        raise InvalidInputError(
            f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidInputError("X and y must be finite")
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    return np.ascontiguousarray(X), y, names


def check_features(X, n_features):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if X.size == n_features else X[:, None]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise InvalidInputError(
            f"expected {n_features} features, got array of shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("X must be finite")
    return np.ascontiguousarray(X)


def check_groups(groups, n):
    if groups is None:
        return None
    g = np.asarray(groups)
    if g.shape != (n,):
        raise InvalidInputError("groups must have one label per row")
    return g
