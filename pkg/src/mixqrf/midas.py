"""Mixed-frequency features: Beta lag filters and their first principal component.

A low-frequency covariate ``Z`` observed once per period is turned into a
daily regressor by filtering the ``K`` most recent *completed* periods with
normalised Beta lag weights. Rows in period ``t`` only ever see ``Z`` values
dated before ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (InsufficientDataError, InsufficientHistoryError,
                         InvalidInputError)
from .numerics import first_component

__all__ = [
    "DEFAULT_OMEGA2_GRID",
    "HighFreqSeries",
    "LowFreqSeries",
    "MidasSpec",
    "MixedFrequencyTable",
    "MidasComponentTransformer",
    "beta_weights",
    "midas_component",
    "midas_matrix",
    "midas_pca_component",
    "align_mixed_frequency",
]

DEFAULT_OMEGA2_GRID = (1.5, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 35.0, 50.0)


@dataclass
class HighFreqSeries:
    """Daily (high-frequency) observations keyed by ``(period, index)``."""

    period: np.ndarray
    index: np.ndarray
    y: np.ndarray
    X: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.period = np.asarray(self.period)
        self.index = np.asarray(self.index)
        self.y = np.asarray(self.y, dtype=float)
        n = self.y.shape[0]
        X = np.asarray(self.X, dtype=float)
        self.X = X.reshape(n, -1) if X.size or n == 0 else np.empty((n, 0))
        if not self.names:
            self.names = [f"x{j}" for j in range(self.X.shape[1])]
        if (self.period.shape != (n,) or self.index.shape != (n,)
                or len(self.names) != self.X.shape[1]):
            raise InvalidInputError("high-frequency columns have inconsistent lengths")
        if n > 1:
            dp = np.diff(self.period)
            di = np.diff(self.index)
            if np.any((dp < 0) | ((dp == 0) & (di <= 0))):
                raise InvalidInputError(
                    "high-frequency timestamps must increase strictly")


@dataclass
class LowFreqSeries:
    """Low-frequency covariates, one row per period."""

    period: np.ndarray
    values: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.period = np.asarray(self.period)
        v = np.asarray(self.values, dtype=float)
        self.values = v[:, None] if v.ndim == 1 else v
        if not self.names:
            self.names = [f"z{h}" for h in range(self.values.shape[1])]
        if self.values.shape[0] != self.period.shape[0]:
            raise InvalidInputError("low-frequency periods and values differ in length")
        if len(self.names) != self.values.shape[1]:
            raise InvalidInputError("wrong number of low-frequency names")
        if np.any(np.diff(self.period) <= 0):
            raise InvalidInputError("low-frequency periods must increase strictly")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("low-frequency values must be finite")

    def column(self, h):
        if isinstance(h, str):
            h = self.names.index(h)
        return self.values[:, h]


@dataclass(frozen=True)
class MidasSpec:
    lag_count: int = 3
    omega1: float = 1.0
    omega2_grid: tuple = DEFAULT_OMEGA2_GRID

    def __post_init__(self):
        if self.lag_count < 1:
            raise InvalidInputError("lag_count must be >= 1")
        if len(self.omega2_grid) == 0:
            raise InvalidInputError("omega2_grid must not be empty")
        if any(w < 1 for w in self.omega2_grid):
            raise InvalidInputError("omega2 grid values must be >= 1")


@dataclass
class MixedFrequencyTable:
    """Training set ``(y, lagged daily covariates, MIDAS columns)``."""

    y: np.ndarray
    X: np.ndarray
    feature_names: list
    period: np.ndarray
    index: np.ndarray
    n_dropped: int = 0
    transformers: dict = field(default_factory=dict)

    @property
    def n_rows(self):
        return self.y.shape[0]

    def head(self, n):
        """First ``n`` rows as a new table (used for expanding windows)."""
        return MixedFrequencyTable(self.y[:n], self.X[:n], list(self.feature_names),
                                   self.period[:n], self.index[:n],
                                   self.n_dropped, self.transformers)


def beta_weights(K, omega1=1.0, omega2=1.0):
    """Normalised Beta lag weights ``phi_1..phi_K`` (lag 1 = most recent).

    ``phi_k`` is proportional to ``(k/K)**(omega1-1) * (1-k/K)**(omega2-1)``;
    the last lag gets zero weight whenever ``omega2 > 1``.
    """
    K = int(K)
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    if not (omega1 > 0 and omega2 > 0):
        raise InvalidInputError("Beta weight parameters must be positive")
    if K == 1:
        return np.ones(1)
    u = np.arange(1, K + 1) / K
    with np.errstate(divide="ignore"):
        raw = u ** (omega1 - 1.0) * (1.0 - u) ** (omega2 - 1.0)
    if not np.all(np.isfinite(raw)):
        raise InvalidInputError("omega2 < 1 puts unbounded weight on the last lag")
    total = raw.sum()
    if not total > 0:
        raise InvalidInputError("Beta weights vanish for these parameters")
    return raw / total


def _has_history(low_period, K, periods):
    return np.searchsorted(low_period, np.asarray(periods), side="left") >= K


def _lag_matrix(low_period, z, K, periods):
    """Rows of ``K`` lags (most recent first) preceding each target period.

    Returns the matrix and a mask of periods with a full history.
    """
    periods = np.asarray(periods)
    pos = np.searchsorted(low_period, periods, side="left")
    ok = pos >= K
    lags = np.full((periods.size, K), np.nan)
    for j in range(K):
        src = pos - 1 - j
        good = ok & (src >= 0)
        lags[good, j] = z[src[good]]
    return lags, ok


def midas_component(series, t, K, omega2, omega1=1.0, period=None):
    """Filtered value ``sum_j phi_j * Z_{t-j}`` over completed periods before ``t``.

    ``series`` is either a :class:`LowFreqSeries` with a single column or a
    value vector with matching ``period`` labels.
    """
    if isinstance(series, LowFreqSeries):
        period, z = series.period, series.values[:, 0]
    else:
        z = np.asarray(series, dtype=float)
        period = np.arange(z.size) if period is None else np.asarray(period)
    lags, ok = _lag_matrix(period, z, K, [t])
    if not ok[0]:
        raise InsufficientHistoryError(
            f"period {t} has fewer than {K} earlier low-frequency observations")
    return float(lags[0] @ beta_weights(K, omega1, omega2))


def _dedupe(grid):
    return tuple(dict.fromkeys(float(w) for w in grid))


def midas_matrix(low_period, z, spec, periods, omega2_values=None):
    """MIDAS components for each target period (rows) and distinct omega2 (columns)."""
    grid = _dedupe(spec.omega2_grid if omega2_values is None else omega2_values)
    lags, ok = _lag_matrix(np.asarray(low_period), np.asarray(z, float),
                           spec.lag_count, periods)
    W = np.column_stack([beta_weights(spec.lag_count, spec.omega1, w2) for w2 in grid])
    out = np.full((lags.shape[0], len(grid)), np.nan)
    out[ok] = lags[ok] @ W
    return out, ok


def midas_pca_component(series, spec, periods=None, h=0):
    """First principal component of the MIDAS components over the omega2 grid.

    Returns ``(periods, scores)``; by default every low-frequency period with
    ``lag_count`` earlier observations is used.
    """
    z = series.column(h)
    if periods is None:
        periods = series.period[spec.lag_count:]
    M, ok = midas_matrix(series.period, z, spec, periods)
    periods = np.asarray(periods)[ok]
    if periods.size < 2:
        raise InvalidInputError("need at least two periods with full lag history")
    return periods, first_component(M[ok])[0]


class MidasComponentTransformer(TransformerMixin, BaseEstimator):
    """Map period labels to MIDAS covariates of one or more low-frequency series.

    ``fit`` learns the PCA loading (and centring) of each covariate's
    omega2-grid matrix from the distinct periods it is given; ``transform``
    applies the stored loading, so features for later periods never feed
    back into earlier ones.

    Parameters
    ----------
    lag_count : int
    omega1 : float
    omega2_grid : sequence of float
    use_pca : bool, default=True
        When False a single filter with ``omega2`` is used.
    omega2 : float, default=5.0
    """

    def __init__(self, lag_count=3, omega1=1.0, omega2_grid=DEFAULT_OMEGA2_GRID,
                 use_pca=True, omega2=5.0):
        self.lag_count = lag_count
        self.omega1 = omega1
        self.omega2_grid = omega2_grid
        self.use_pca = use_pca
        self.omega2 = omega2

    def _spec(self):
        return MidasSpec(self.lag_count, self.omega1, tuple(self.omega2_grid))

    def _raw(self, periods):
        spec = self._spec()
        grid = tuple(self.omega2_grid) if self.use_pca else (self.omega2,)
        mats, ok_all = [], np.ones(len(periods), bool)
        for h in range(self.lows_.values.shape[1]):
            M, ok = midas_matrix(self.lows_.period, self.lows_.values[:, h], spec,
                                 periods, grid)
            mats.append(M)
            ok_all &= ok
        return mats, ok_all

    def fit(self, X, y=None, lows=None):
        if lows is None:
            raise InvalidInputError("fit needs the low-frequency series (lows=...)")
        self.lows_ = lows
        periods = np.unique(np.asarray(X).ravel())
        mats, ok = self._raw(periods)
        if ok.sum() < (2 if self.use_pca else 1):
            raise InsufficientDataError("not enough periods with full lag history")
        self.loadings_, self.centers_ = [], []
        for M in mats:
            if self.use_pca:
                _, loading, means = first_component(M[ok])
            else:
                loading, means = np.ones(1), np.zeros(1)
            self.loadings_.append(loading)
            self.centers_.append(means)
        self.feature_names_out_ = [f"MC_{name}" for name in lows.names]
        return self

    def transform(self, X):
        """MIDAS columns for each period label; NaN where history is missing."""
        check_is_fitted(self, "loadings_")
        periods = np.asarray(X).ravel()
        mats, ok = self._raw(periods)
        out = np.full((periods.size, len(mats)), np.nan)
        for h, M in enumerate(mats):
            out[ok, h] = (M[ok] - self.centers_[h]) @ self.loadings_[h]
        return out

    def history_mask(self, X):
        check_is_fitted(self, "loadings_")
        return self._raw(np.asarray(X).ravel())[1]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "loadings_")
        return np.asarray(self.feature_names_out_, dtype=object)


def align_mixed_frequency(high, lows, spec=None, use_pca=True, omega2=None,
                          contemporaneous=(), outcome_lags=0, transformer=None):
    """Build the mixed-frequency training table.

    Each kept row ``r`` carries ``y_r``, the daily covariates of the previous
    observation (``x_{r-1}``, crossing period boundaries), ``outcome_lags``
    lags of the outcome, and one MIDAS column per low-frequency covariate
    computed from periods strictly before the row's period.

    Parameters
    ----------
    high : HighFreqSeries
    lows : LowFreqSeries or None
        ``None`` yields a plain (no-MIDAS) table.
    spec : MidasSpec, optional
    use_pca : bool
        Use the first principal component over ``spec.omega2_grid``;
        otherwise a single filter with ``omega2``.
    contemporaneous : iterable of str
        Daily covariates used at time ``r`` instead of ``r - 1``.
    transformer : MidasComponentTransformer, optional
        Pre-fitted transformer; when given its loadings are reused instead
        of being estimated on this sample.
    """
    spec = spec or MidasSpec()
    n = high.y.shape[0]
    contemporaneous = set(contemporaneous)
    unknown = contemporaneous - set(high.names)
    if unknown:
        raise InvalidInputError(f"unknown contemporaneous columns: {sorted(unknown)}")

    start = max(1, int(outcome_lags))
    rows = np.arange(start, n)
    cols, names = [], []
    for j, name in enumerate(high.names):
        shift = 0 if name in contemporaneous else 1
        cols.append(high.X[rows - shift, j])
        names.append(name)
    for L in range(1, int(outcome_lags) + 1):
        cols.append(high.y[rows - L])
        names.append(f"y_lag{L}")

    keep = np.ones(rows.size, bool)
    fitted = None
    if lows is not None and lows.values.shape[1] > 0:
        if transformer is None:
            fitted = MidasComponentTransformer(
                lag_count=spec.lag_count, omega1=spec.omega1,
                omega2_grid=spec.omega2_grid, use_pca=use_pca,
                omega2=omega2 if omega2 is not None else spec.omega2_grid[0])
            row_periods = high.period[rows]
            mask = _has_history(lows.period, spec.lag_count, row_periods)
            if not mask.any():
                raise InsufficientDataError("no row has a full low-frequency history")
            fitted.fit(row_periods[mask], lows=lows)
        else:
            fitted = transformer
        mc = fitted.transform(high.period[rows])
        keep &= np.all(np.isfinite(mc), axis=1)
        cols.extend(mc.T)
        names.extend(fitted.feature_names_out_)

    X = np.column_stack(cols) if cols else np.empty((rows.size, 0))
    keep &= np.all(np.isfinite(X), axis=1)
    if not keep.any():
        raise InsufficientDataError("no usable rows after alignment")
    rows_kept = rows[keep]
    return MixedFrequencyTable(
        y=high.y[rows_kept].copy(), X=np.ascontiguousarray(X[keep]),
        feature_names=names, period=high.period[rows_kept],
        index=high.index[rows_kept], n_dropped=int(n - rows_kept.size),
        transformers={"midas": fitted} if fitted is not None else {})
