"""Out-of-bag permutation importance at a fixed quantile level."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InsufficientOOBError, InvalidInputError
from .ensemble import check_taus

__all__ = ["ImportanceResult", "permutation_importance"]


@dataclass(frozen=True)
class ImportanceResult:
    importances: np.ndarray
    importances_std: np.ndarray
    baseline_ssr: float
    n_oob: int
    feature_names: list

    def ranking(self):
        """Feature indices from most to least important."""
        return np.argsort(-self.importances, kind="stable")


def _oob_ssr(forest, X, y, tau, rows):
    q = forest.quantiles(X, [tau], oob=True)[rows, 0]
    return float(np.sum((y[rows] - q) ** 2))


def permutation_importance(forest, X, y, tau=0.5, n_repeats=5, seed=0):
    """Increase of the out-of-bag squared residuals after permuting a column.

    The residuals use the ``tau`` quantile prediction of the sub-forest of
    trees for which each row was out of bag. The reported score is
    ``ssr_permuted - ssr``, so informative features come out positive.
    """
    tau = float(check_taus(tau)[0])
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = forest.train_outcomes.size
    if X.shape != (n, forest.n_features) or y.shape != (n,):
        raise InvalidInputError("importance needs the forest's training data")
    if n_repeats < 1:
        raise InvalidInputError("n_repeats must be >= 1")
    rows = np.flatnonzero(forest.oob_masks.any(axis=0))
    if rows.size < 2:
        raise InsufficientOOBError("fewer than two out-of-bag observations")

    base = _oob_ssr(forest, X, y, tau, rows)
    rng = np.random.default_rng(seed)
    scores = np.empty((forest.n_features, n_repeats))
    for j in range(forest.n_features):
        for r in range(n_repeats):
            Xp = X.copy()
            Xp[rows, j] = X[rows[rng.permutation(rows.size)], j]
            scores[j, r] = _oob_ssr(forest, Xp, y, tau, rows) - base
    return ImportanceResult(importances=scores.mean(axis=1),
                            importances_std=scores.std(axis=1),
                            baseline_ssr=base, n_oob=int(rows.size),
                            feature_names=list(forest.feature_names))
