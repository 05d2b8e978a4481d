"""Autoregressive quantile forecasting.

``fit_caviar_sav`` estimates the symmetric-absolute-value CaViaR recursion
and ``fit_dynamic_midas_qrf`` runs an expanding-window forest that feeds its
own one-step-ahead quantile back in as a covariate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_xy
from .exceptions import InsufficientHistoryError, InvalidConfigError, InvalidInputError
from .forest import QuantileForest, TrainConfig, fit_forest
from .forest.ensemble import check_taus
from .numerics import nelder_mead

__all__ = [
    "CaviarParams",
    "CaviarFit",
    "caviar_path",
    "fit_caviar_sav",
    "CaviarSAV",
    "RefitRecord",
    "DynamicFitResult",
    "default_warmup",
    "expanding_window_forecast",
    "fit_dynamic_midas_qrf",
    "DynamicMidasQRF",
]

MIN_CAVIAR_OBS = 30
LAGQ_NAME = "lag_quant"


@dataclass(frozen=True)
class CaviarParams:
    beta0: float
    beta1: float
    beta2: float
    tau: float
    q0: float

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise InvalidInputError("tau must lie in (0, 1)")
        if not np.all(np.isfinite([self.beta0, self.beta1, self.beta2, self.q0])):
            raise InvalidInputError("CaViaR parameters must be finite")

    @property
    def beta(self):
        return np.array([self.beta0, self.beta1, self.beta2])

    def next_quantile(self, q_last, y_last):
        return self.beta0 + self.beta1 * q_last + self.beta2 * abs(y_last)


@dataclass(frozen=True)
class CaviarFit:
    params: CaviarParams
    forecasts: np.ndarray
    loss: float
    converged: bool
    last_return: float

    @property
    def next_forecast(self):
        """Quantile for the period after the fitted sample."""
        return self.params.next_quantile(self.forecasts[-1], self.last_return)


@numba.njit(cache=True, nogil=True)
def _sav_path(b0, b1, b2, q0, y):
    n = y.shape[0]
    q = np.empty(n)
    q[0] = q0
    for t in range(1, n):
        q[t] = b0 + b1 * q[t - 1] + b2 * abs(y[t - 1])
    return q


@numba.njit(cache=True, nogil=True)
def _sav_loss(b0, b1, b2, q0, y, tau):
    n = y.shape[0]
    q = q0
    total = 0.0
    for t in range(n):
        if t > 0:
            q = b0 + b1 * q + b2 * abs(y[t - 1])
            if not np.isfinite(q):
                return np.inf
        u = y[t] - q
        total += u * (tau - (1.0 if u < 0 else 0.0))
    return total / n


def caviar_path(params, returns):
    """In-sample SAV forecasts ``Q_0 = q0, Q_t = b0 + b1 Q_{t-1} + b2 |y_{t-1}|``."""
    y = np.ascontiguousarray(returns, dtype=float)
    return _sav_path(params.beta0, params.beta1, params.beta2, params.q0, y)


def _type1_quantile(x, tau):
    s = np.sort(x)
    k = int(np.ceil(tau * s.size - 1e-12))
    return float(s[max(k, 1) - 1])


def _start_box(q_star, tau):
    scale = 2.0 * abs(q_star) if q_star != 0 else 1.0
    if tau < 0.5:
        b2 = (-1.0, 0.0)
    elif tau > 0.5:
        b2 = (0.0, 1.0)
    else:
        b2 = (-1.0, 1.0)
    return np.array([[-scale, scale], [0.0, 0.95], list(b2)])


def fit_caviar_sav(returns, tau, restarts=10, seed=0, max_iter=2000):
    """Fit the SAV CaViaR model by minimising the in-sample check loss.

    The first start is the flat solution ``(q*, 0, 0)``; the remaining
    ``restarts - 1`` are uniform draws from a box around it. Each start is
    polished by Nelder-Mead and the lowest loss wins.

    Returns
    -------
    CaviarFit
        Parameters, the recursive in-sample forecast path and its loss.
    """
    y = np.ascontiguousarray(returns, dtype=float)
    if y.ndim != 1 or y.size < MIN_CAVIAR_OBS:
        raise InsufficientHistoryError(
            f"CaViaR needs at least {MIN_CAVIAR_OBS} observations")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("returns must be finite")
    tau = float(tau)
    if not 0 < tau < 1:
        raise InvalidInputError("tau must lie in (0, 1)")
    if restarts < 1:
        raise InvalidConfigError("restarts must be >= 1")

    q0 = _type1_quantile(y[:min(y.size, 50)], tau)
    q_star = _type1_quantile(y, tau)

    def objective(b):
        return _sav_loss(b[0], b[1], b[2], q0, y, tau)

    flat = np.array([q_star, 0.0, 0.0])
    best = nelder_mead(objective, flat, max_iter=max_iter) if np.ptp(y) > 0 else None
    if best is None:
        params = CaviarParams(q_star, 0.0, 0.0, tau, q0)
        return CaviarFit(params, caviar_path(params, y), objective(flat), True, float(y[-1]))

    rng = np.random.default_rng(seed)
    box = _start_box(q_star, tau)
    for _ in range(restarts - 1):
        start = rng.uniform(box[:, 0], box[:, 1])
        if not np.isfinite(objective(start)):
            continue
        res = nelder_mead(objective, start, max_iter=max_iter)
        if res.value < best.value:
            best = res
    b = best.argmin
    params = CaviarParams(float(b[0]), float(b[1]), float(b[2]), tau, q0)
    return CaviarFit(params, caviar_path(params, y), float(best.value),
                     best.converged, float(y[-1]))


class CaviarSAV(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_caviar_sav`.

    ``fit`` takes the return series as ``y`` (``X`` is ignored) and
    ``predict`` returns the in-sample path for the fitted series.
    """

    def __init__(self, tau=0.05, restarts=10, random_state=0):
        self.tau = tau
        self.restarts = restarts
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if y is None:
            y, X = X, None
        self.fit_ = fit_caviar_sav(np.asarray(y, dtype=float).ravel(), self.tau,
                                   self.restarts, self.random_state)
        self.params_ = self.fit_.params
        return self

    def predict(self, X=None, y=None):
        """Forecast path for ``y`` (defaults to the training series)."""
        check_is_fitted(self, "fit_")
        series = X if y is None else y
        if series is None:
            return self.fit_.forecasts.copy()
        return caviar_path(self.params_, np.asarray(series, dtype=float).ravel())

    def next_forecast(self):
        check_is_fitted(self, "fit_")
        return self.fit_.next_forecast


@dataclass(frozen=True)
class RefitRecord:
    row: int
    n_train: int


@dataclass
class DynamicFitResult:
    """Output of the expanding-window loop.

    ``predictions[r]`` is the one-step-ahead quantile for row ``r``. Rows
    below ``warmup`` come from the CaViaR initialiser (``source == 'caviar'``).
    """

    predictions: np.ndarray
    lag_quant: np.ndarray
    warmup: int
    refits: list
    final_forest: QuantileForest | None
    caviar: CaviarFit | None = None
    source: np.ndarray = field(default=None)

    @property
    def n_rows(self):
        return self.predictions.size

    def out_of_sample(self):
        return self.predictions[self.warmup:]


def default_warmup(n_rows):
    return max(50, int(np.ceil(0.25 * n_rows)))


def _check_schedule(R, warmup, refit_every):
    if warmup is None:
        warmup = default_warmup(R)
    warmup = int(warmup)
    if warmup < MIN_CAVIAR_OBS:
        raise InvalidConfigError(f"warmup must be at least {MIN_CAVIAR_OBS}")
    if warmup >= R:
        raise InvalidConfigError(f"warmup={warmup} must be smaller than the {R} rows")
    if int(refit_every) < 1:
        raise InvalidConfigError("refit_every must be >= 1")
    return warmup, int(refit_every)


def _resolve_config(config, p):
    config = config or TrainConfig()
    if config.mtry is not None and config.mtry > p:
        config = replace(config, mtry=p)
    return config


def expanding_window_forecast(X, y, tau, warmup=None, config=None, refit_every=1,
                              n_jobs=1):
    """Static expanding-window forest forecasts.

    For every row ``r >= warmup`` the forest trained on rows ``< r`` (refit
    every ``refit_every`` rows) predicts the ``tau`` quantile of row ``r``.
    Earlier rows are NaN. A sequence of levels gives an ``(R, k)`` array
    from the same forests.
    """
    X, y, _ = check_xy(X, y)
    R = y.size
    warmup, refit_every = _check_schedule(R, warmup, refit_every)
    config = _resolve_config(config, X.shape[1])
    levels = check_taus(tau)
    preds = np.full((R, levels.size), np.nan)
    forest = None
    for r in range(warmup, R):
        if (r - warmup) % refit_every == 0:
            forest = fit_forest(X[:r], y[:r], config=config, n_jobs=n_jobs)
        preds[r] = forest.quantiles(X[r:r + 1], levels)[0]
    return preds[:, 0] if np.ndim(tau) == 0 else preds


def fit_dynamic_midas_qrf(table, tau, warmup=None, config=None, refit_every=1,
                          restarts=10, fit_final=True, lag_quant_override=None,
                          n_jobs=1):
    """Dynamic MIDAS-QRF on an aligned table.

    Step 0 fits CaViaR-SAV on the first ``warmup`` outcomes and uses its
    path as the warm-up predictions. From row ``warmup`` on, each row is
    predicted by a forest trained on all earlier rows, with the previous
    prediction as an extra ``lag_quant`` covariate; the forest is rebuilt
    from scratch every ``refit_every`` rows and reused in between.

    Parameters
    ----------
    table : MixedFrequencyTable or tuple ``(X, y)``
    lag_quant_override : float, optional
        Freeze the lag-quant column to this constant (test hook).
    fit_final : bool
        Also train a forest on all ``R`` rows for forecasting past the sample.
    """
    if isinstance(table, tuple):
        X, y = table
        names = None
    else:
        X, y, names = table.X, table.y, list(table.feature_names)
    X, y, default_names = check_xy(X, y)
    names = names or default_names
    R, p = X.shape
    warmup, refit_every = _check_schedule(R, warmup, refit_every)
    tau = float(tau)
    if not 0 < tau < 1:
        raise InvalidInputError("tau must lie in (0, 1)")
    config = _resolve_config(config, p + 1)
    feature_names = list(names) + [LAGQ_NAME]

    caviar = fit_caviar_sav(y[:warmup], tau, restarts=restarts, seed=config.seed)
    preds = np.empty(R)
    preds[:warmup] = caviar.forecasts
    lag = np.empty(R)
    lag[0] = caviar.params.q0
    lag[1:warmup] = preds[:warmup - 1]
    source = np.array(["caviar"] * warmup + ["forest"] * (R - warmup), dtype=object)

    if lag_quant_override is not None:
        lag[:] = float(lag_quant_override)

    Xa = np.empty((R, p + 1))
    Xa[:, :p] = X
    Xa[:warmup, p] = lag[:warmup]
    refits = []
    forest = None
    for r in range(warmup, R):
        if lag_quant_override is None:
            lag[r] = preds[r - 1]
        Xa[r, p] = lag[r]
        if (r - warmup) % refit_every == 0:
            forest = fit_forest(Xa[:r], y[:r], config=config,
                                feature_names=feature_names, n_jobs=n_jobs)
            refits.append(RefitRecord(row=r, n_train=r))
        preds[r] = forest.quantiles(Xa[r:r + 1], [tau])[0, 0]

    final = None
    if fit_final:
        final = fit_forest(Xa, y, config=config, feature_names=feature_names,
                           n_jobs=n_jobs)
        refits.append(RefitRecord(row=R, n_train=R))
    return DynamicFitResult(predictions=preds, lag_quant=lag.copy(), warmup=warmup,
                            refits=refits, final_forest=final, caviar=caviar,
                            source=source)


class DynamicMidasQRF(RegressorMixin, BaseEstimator):
    """Expanding-window quantile forest with a lagged-quantile covariate.

    ``fit(X, y)`` runs the whole one-step-ahead loop over the rows in order;
    ``predictions_`` then holds the sequence of forecasts and
    :meth:`predict_next` scores a new row with the final forest.
    """

    def __init__(self, tau=0.05, warmup=None, refit_every=1, n_trees=100,
                 mtry=None, min_node_size=5, max_depth=None, bootstrap_fraction=1.0,
                 restarts=10, random_state=0, n_jobs=1):
        self.tau = tau
        self.warmup = warmup
        self.refit_every = refit_every
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.bootstrap_fraction = bootstrap_fraction
        self.restarts = restarts
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        return TrainConfig(n_trees=self.n_trees, mtry=self.mtry,
                           min_node_size=self.min_node_size, max_depth=self.max_depth,
                           bootstrap_fraction=self.bootstrap_fraction,
                           seed=self.random_state)

    def fit(self, X, y):
        X, y, names = check_xy(X, y)
        self.result_ = fit_dynamic_midas_qrf(
            (X, y), self.tau, warmup=self.warmup, config=self._config(),
            refit_every=self.refit_every, restarts=self.restarts, n_jobs=self.n_jobs)
        self.predictions_ = self.result_.predictions
        self.n_features_in_ = X.shape[1]
        return self

    def predict_next(self, X):
        """Quantile for rows that follow the training sample.

        Each row uses the previous row's forecast as its lagged quantile,
        starting from the last in-sample prediction.
        """
        check_is_fitted(self, "result_")
        X = check_features(X, self.n_features_in_)
        forest = self.result_.final_forest
        out = np.empty(X.shape[0])
        prev = self.predictions_[-1]
        for i in range(X.shape[0]):
            row = np.append(X[i], prev)[None, :]
            out[i] = prev = forest.quantiles(row, [self.tau])[0, 0]
        return out

    def predict(self, X):
        return self.predict_next(X)
