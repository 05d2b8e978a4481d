"""Finite-mixture quantile regression forest for clustered data.

The conditional quantile of ``y_it`` is ``g(x_it) + alpha_k`` where ``g`` is
a quantile forest shared by all units and ``alpha_k`` is one of K mass
points of a discrete random intercept. The parameters are fitted by EM on
an asymmetric Laplace working likelihood.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_xy
from .exceptions import (
    InvalidConfigError, InvalidInputError, MixQRFError, NumericalDegeneracyError)
from .forest import QuantileForest, TrainConfig, fit_forest
from .numerics import gauss_hermite, nelder_mead

__all__ = [
    "PanelDataset",
    "EmConfig",
    "MixtureState",
    "FmQrfModel",
    "BootstrapResult",
    "ald_constants",
    "ald_log_density",
    "init_em",
    "e_step",
    "refit_fixed_part",
    "latent_v",
    "m_step_closed_form",
    "sigma_mle",
    "m_step_numeric",
    "observed_log_likelihood",
    "fit_fm_qrf",
    "predict_fm_qrf",
    "bootstrap_se",
    "FMQRF",
]

log = logging.getLogger(__name__)

SIGMA_MIN = 1e-8
PI_FLOOR = 1e-6
STARVED = 1e-8


def _rho(u, tau):
    return u * (tau - (u < 0))


def ald_constants(tau):
    """``(theta, rho2)`` of the normal-exponential mixture representation."""
    c = tau * (1 - tau)
    return (1 - 2 * tau) / c, 2 / c


def ald_log_density(y, mu, sigma, tau):
    """Log density of the asymmetric Laplace distribution."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise InvalidInputError("sigma must be positive")
    if not 0 < tau < 1:
        raise InvalidInputError("tau must lie in (0, 1)")
    u = (np.asarray(y, dtype=float) - mu) / sigma
    return np.log(tau * (1 - tau) / sigma) - _rho(u, tau)


@dataclass
class PanelDataset:
    """Stacked panel: row ``j`` is observation ``(unit[j], t)``.

    ``unit`` holds contiguous codes ``0..N-1``; ``labels[code]`` is the
    original identifier. ``source`` marks copies: rows with equal
    ``source`` are the same original observation (resampled panels), and
    the forest bootstrap keeps them in or out of bag together.
    """

    unit: np.ndarray
    y: np.ndarray
    X: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)
    source: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=float)
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.unit = np.asarray(self.unit, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size or self.unit.shape != self.y.shape:
            raise InvalidInputError("panel arrays have inconsistent shapes")
        if self.y.size == 0:
            raise InvalidInputError("empty panel")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise InvalidInputError("panel values must be finite")
        if np.any(np.bincount(self.unit, minlength=len(self.labels)) == 0):
            raise InvalidInputError("every unit needs at least one observation")
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.X.shape[1])]
        if self.source is None:
            self.source = np.arange(self.y.size)
        self.source = np.asarray(self.source, dtype=np.int64)
        if self.source.shape != self.y.shape:
            raise InvalidInputError("source must have one entry per row")

    @property
    def has_copies(self):
        return np.unique(self.source).size < self.source.size

    @classmethod
    def from_arrays(cls, X, y, units, feature_names=None):
        X, y, names = check_xy(X, y)
        units = np.asarray(units)
        if units.shape != y.shape:
            raise InvalidInputError("units must have one label per row")
        labels, codes = np.unique(units, return_inverse=True)
        return cls(unit=codes, y=y, X=X, labels=labels,
                   feature_names=feature_names or names)

    @property
    def n_units(self):
        return len(self.labels)

    @property
    def n_obs(self):
        return self.y.size

    def sizes(self):
        return np.bincount(self.unit, minlength=self.n_units)

    def subset_units(self, codes):
        """Panel made of the given unit codes; repeats become new units."""
        pieces = [np.flatnonzero(self.unit == c) for c in codes]
        rows = np.concatenate(pieces)
        new_unit = np.repeat(np.arange(len(codes)), [p.size for p in pieces])
        return PanelDataset(unit=new_unit, y=self.y[rows], X=self.X[rows],
                            labels=np.arange(len(codes)),
                            feature_names=list(self.feature_names),
                            source=self.source[rows])


@dataclass(frozen=True)
class EmConfig:
    """EM settings.

    ``m_step`` is ``"closed_form"`` (latent-moment update of alpha, ALD MLE
    of sigma) or ``"nelder_mead"`` (joint numeric maximisation).
    ``alpha_init="zero"`` starts every mass point at 0; the default spreads
    them over scaled Gauss-Hermite nodes. ``freeze_fixed_part`` keeps the
    initial forest for the whole run (test hook).
    """

    tau: float = 0.5
    K: int = 3
    max_iter: int = 50
    loglik_tol: float = 1e-4
    m_step: str = "closed_form"
    forest: TrainConfig = field(default_factory=TrainConfig)
    v_floor: float = 1e-6
    seed: int = 0
    alpha_init: str = "gauss_hermite"
    freeze_fixed_part: bool = False
    prune_tol: float = 1e-6
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise InvalidConfigError("tau must lie in (0, 1)")
        if self.K < 1:
            raise InvalidConfigError("K must be >= 1")
        if self.max_iter < 1:
            raise InvalidConfigError("max_iter must be >= 1")
        if not self.loglik_tol > 0:
            raise InvalidConfigError("loglik_tol must be positive")
        if self.m_step not in ("closed_form", "nelder_mead"):
            raise InvalidConfigError("m_step must be 'closed_form' or 'nelder_mead'")
        if self.alpha_init not in ("gauss_hermite", "zero"):
            raise InvalidConfigError("alpha_init must be 'gauss_hermite' or 'zero'")
        if not self.v_floor > 0:
            raise InvalidConfigError("v_floor must be positive")


@dataclass
class MixtureState:
    tau: float
    alpha: np.ndarray
    pi: np.ndarray
    sigma: float
    W: np.ndarray
    g: np.ndarray
    forest: QuantileForest
    V: np.ndarray | None = None
    frozen: np.ndarray | None = None
    offset: float = 0.0

    @property
    def K(self):
        return self.alpha.size

    @property
    def theta(self):
        return ald_constants(self.tau)[0]

    @property
    def rho2(self):
        return ald_constants(self.tau)[1]

    def copy(self, **changes):
        return replace(self, **changes)


@dataclass
class FmQrfModel:
    state: MixtureState
    assignment: np.ndarray
    trace: list
    config: EmConfig
    labels: np.ndarray
    feature_names: list
    converged: bool
    n_iter: int

    @property
    def loglik(self):
        return self.trace[-1]

    def component_of(self, units):
        """MAP component per unit label (-1 for unseen labels)."""
        index = {lab: i for i, lab in enumerate(self.labels.tolist())}
        codes = np.array([index.get(u, -1) for u in np.asarray(units).tolist()])
        out = np.full(codes.size, -1)
        seen = codes >= 0
        out[seen] = self.assignment[codes[seen]]
        return out


def _fixed_part_predictions(forest, X, tau, rows):
    """Out-of-bag predictions of the fixed part at the training rows.

    ``rows[j]`` is a training-row index whose covariates equal ``X[j]``;
    rows that were never out of bag fall back to the in-bag forest.
    """
    g = forest.quantiles(X, [tau], oob=True, rows=rows)[:, 0]
    missing = ~np.isfinite(g)
    if missing.any():
        g[missing] = forest.quantiles(X[missing], [tau])[:, 0]
    return g


def _unit_loglik(panel, state, alpha=None, sigma=None):
    """``L[i, k] = sum_t log f(y_it | g + alpha_k, sigma)``."""
    alpha = state.alpha if alpha is None else alpha
    sigma = state.sigma if sigma is None else sigma
    mu = state.g[:, None] + alpha[None, :]
    dens = ald_log_density(panel.y[:, None], mu, sigma, state.tau)
    out = np.empty((panel.n_units, alpha.size))
    for k in range(alpha.size):
        out[:, k] = np.bincount(panel.unit, weights=dens[:, k], minlength=panel.n_units)
    return out


def _floor_pi(pi):
    if np.any(pi < PI_FLOOR):
        pi = np.maximum(pi, PI_FLOOR)
        pi = pi / pi.sum()
    return pi


def init_em(panel, config):
    """Pooled quantile forest plus Gauss-Hermite starting values."""
    K = config.K
    if K > panel.n_units:
        raise InvalidConfigError(f"K={K} exceeds the number of units ({panel.n_units})")
    tau = config.tau
    forest = fit_forest(panel.X, panel.y, config=config.forest,
                        feature_names=panel.feature_names, n_jobs=config.n_jobs,
                        groups=panel.source if panel.has_copies else None)
    g = _fixed_part_predictions(forest, panel.X, tau, np.arange(panel.n_obs))
    resid = panel.y - g
    sigma = max(float(np.mean(_rho(resid, tau))), SIGMA_MIN)
    quad = gauss_hermite(K)
    if config.alpha_init == "zero":
        alpha = np.zeros(K)
    else:
        scale = float(np.median(np.abs(resid)))
        alpha = quad.nodes * (scale if scale > 0 else 1.0)
    pi = quad.weights.copy()
    W = np.tile(pi, (panel.n_units, 1))
    return MixtureState(tau=tau, alpha=alpha, pi=pi, sigma=sigma, W=W, g=g,
                        forest=forest, frozen=np.zeros(K, dtype=bool))


def e_step(panel, state):
    """Posterior responsibilities ``W`` and updated mixing weights ``pi``."""
    with np.errstate(divide="ignore"):
        logw = np.log(state.pi)[None, :] + _unit_loglik(panel, state)
    top = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NumericalDegeneracyError("every component has zero likelihood for some unit")
    W = np.exp(logw - top)
    W /= W.sum(axis=1, keepdims=True)
    return W, W.mean(axis=0)


def _expanded(panel, state):
    """K replicas of each observation, pruned of negligible weights."""
    n, K = panel.n_obs, state.K
    w = state.W[panel.unit]
    obs = np.tile(np.arange(n), K)
    comp = np.repeat(np.arange(K), n)
    weights = w.T.ravel()
    return obs, comp, weights


def refit_fixed_part(panel, state, config, prune_tol=None):
    """Case-weighted forest on the replicated sample ``y - alpha_k``.

    Replicas of one observation share covariates, so they are bootstrapped
    together. Returns ``(forest, g)`` with ``g`` the out-of-bag fixed part
    at every observation.
    """
    prune_tol = config.prune_tol if prune_tol is None else prune_tol
    obs, comp, weights = _expanded(panel, state)
    keep = weights >= prune_tol
    obs, comp, weights = obs[keep], comp[keep], weights[keep]
    forest = fit_forest(panel.X[obs], panel.y[obs] - state.alpha[comp],
                        case_weights=weights, config=config.forest,
                        feature_names=panel.feature_names, groups=panel.source[obs],
                        n_jobs=config.n_jobs)
    # first kept replica of every observation (weights sum to one, so one survives)
    _, first = np.unique(obs, return_index=True)
    g = _fixed_part_predictions(forest, panel.X, state.tau, first)
    return forest, g


def latent_v(residual, tau, v_floor=1e-6, scale=None):
    """Conditional inverse moment ``E[1/V]`` of the latent ALD scale.

    ``|residual|`` is floored at ``v_floor * scale`` with ``scale`` the
    median absolute residual unless given.
    """
    r = np.abs(np.asarray(residual, dtype=float))
    if scale is None:
        scale = float(np.median(r)) if r.size else 1.0
    if not scale > 0:
        scale = 1.0
    theta, rho2 = ald_constants(tau)
    return np.sqrt(theta ** 2 + 2 * rho2) / np.maximum(r, v_floor * scale)


def _component_residuals(panel, state, alpha=None):
    alpha = state.alpha if alpha is None else alpha
    return (panel.y - state.g)[:, None] - alpha[None, :]


def _latent_matrix(panel, state, v_floor):
    R = _component_residuals(panel, state)
    scale = float(np.median(np.abs(R)))
    return latent_v(R, state.tau, v_floor, scale=scale)


def m_step_closed_form(panel, state, V=None, v_floor=1e-6):
    """Stationary point of the expected complete objective in ``alpha``.

    ``alpha_k = (sum w v (y - g) - theta sum w) / sum w v`` with the latent
    moments ``V`` evaluated at the current ``alpha`` unless supplied.
    Starved components keep their current value.

    Returns
    -------
    alpha : ndarray of shape (K,)
    V : ndarray of shape (n, K)
    starved : ndarray of bool
    """
    if V is None:
        V = _latent_matrix(panel, state, v_floor)
    w = state.W[panel.unit]
    r = (panel.y - state.g)[:, None]
    wv = w * V
    num = np.sum(wv * r, axis=0) - state.theta * w.sum(axis=0)
    den = wv.sum(axis=0)
    starved = state.W.sum(axis=0) < STARVED
    alpha = state.alpha.copy()
    ok = ~starved & (den > 0)
    alpha[ok] = num[ok] / den[ok]
    return alpha, V, starved | ~ok


def sigma_mle(panel, state, alpha=None):
    """ALD scale MLE ``(1/n) sum_it sum_k w_ik rho(y - g - alpha_k)``."""
    R = _component_residuals(panel, state, alpha)
    w = state.W[panel.unit]
    return max(float(np.sum(w * _rho(R, state.tau)) / panel.n_obs), SIGMA_MIN)


def expected_complete_loglik(panel, state, alpha=None, sigma=None):
    """``sum_it sum_k w_ik log f(y_it | g + alpha_k, sigma)``."""
    alpha = state.alpha if alpha is None else alpha
    sigma = state.sigma if sigma is None else sigma
    L = _unit_loglik(panel, state, alpha, sigma)
    return float(np.sum(state.W * L))


def latent_objective(panel, state, alpha, V):
    """``(1/2) sum w v (y - g - alpha)^2 - theta sum w (y - g - alpha)``."""
    w = state.W[panel.unit]
    R = _component_residuals(panel, state, alpha)
    return float(0.5 * np.sum(w * V * R ** 2) - state.theta * np.sum(w * R))


def m_step_numeric(panel, state, objective="ald", V=None, v_floor=1e-6,
                   restarts=0, seed=0, max_iter=4000):
    """Nelder-Mead M-step.

    ``objective="ald"`` maximises the expected complete ALD log-likelihood
    jointly over ``alpha`` and ``log sigma``. ``objective="latent"`` keeps
    ``sigma`` and the latent moments ``V`` fixed and minimises the
    quadratic surrogate in ``alpha`` only.

    Returns
    -------
    alpha, sigma, converged
    """
    K = state.K
    if objective == "ald":
        def f(z):
            return -expected_complete_loglik(panel, state, z[:K], float(np.exp(z[K])))
        x0 = np.append(state.alpha, np.log(state.sigma))
        step = np.append(np.full(K, max(0.1 * state.sigma, 1e-3)), 0.1)
    elif objective == "latent":
        if V is None:
            V = _latent_matrix(panel, state, v_floor)

        def f(z):
            return latent_objective(panel, state, z, V)
        x0 = state.alpha.copy()
        step = np.full(K, max(0.1 * state.sigma, 1e-3))
    else:
        raise InvalidConfigError("objective must be 'ald' or 'latent'")

    best = nelder_mead(f, x0, max_iter=max_iter, x_tol=1e-10, f_tol=1e-12,
                       initial_step=step)
    # restart from the optimum: simplex methods can stall on kinks
    for _ in range(2):
        again = nelder_mead(f, best.argmin, max_iter=max_iter, x_tol=1e-10,
                            f_tol=1e-12, initial_step=step)
        if not again.value < best.value - 1e-12:
            break
        best = again
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        start = best.argmin + rng.normal(scale=step)
        res = nelder_mead(f, start, max_iter=max_iter, x_tol=1e-10, f_tol=1e-12,
                          initial_step=step)
        if res.value < best.value:
            best = res
    if not best.converged:
        warnings.warn("Nelder-Mead M-step did not converge", RuntimeWarning,
                      stacklevel=2)
    z = best.argmin
    if objective == "ald":
        return z[:K].copy(), max(float(np.exp(z[K])), SIGMA_MIN), best.converged
    return z.copy(), state.sigma, best.converged


def observed_log_likelihood(panel, state):
    """``sum_i log sum_k pi_k prod_t f(y_it | g + alpha_k, sigma)``."""
    with np.errstate(divide="ignore"):
        logw = np.log(state.pi)[None, :] + _unit_loglik(panel, state)
    return float(np.sum(logsumexp(logw, axis=1)))


def center_mixture(state):
    """Shift the mass points to ``sum_k pi_k alpha_k = 0``.

    The shift moves into the fixed part, so every ``g + alpha_k`` and hence
    the likelihood are unchanged; it only pins down the split between the
    forest level and the intercepts.
    """
    c = float(state.pi @ state.alpha)
    return state.copy(alpha=state.alpha - c, g=state.g + c, offset=state.offset + c)


def _m_step(panel, state, config):
    if config.m_step == "closed_form":
        alpha, V, starved = m_step_closed_form(panel, state, v_floor=config.v_floor)
        sigma = sigma_mle(panel, state, alpha)
        return alpha, sigma, V, starved
    alpha, sigma, _ = m_step_numeric(panel, state, "ald", seed=config.seed)
    starved = state.W.sum(axis=0) < STARVED
    alpha[starved] = state.alpha[starved]
    return alpha, sigma, None, starved


def fit_fm_qrf(panel, config, frozen_g=None):
    """Fit the mixture by EM.

    Each iteration runs the E-step, refits the forest on the replicated
    sample (unless ``config.freeze_fixed_part``), updates ``alpha`` and
    ``sigma`` and recentres the mass points to a zero mixing-weighted mean.
    Iteration stops once the observed log-likelihood changes by less than
    ``loglik_tol``.

    Parameters
    ----------
    frozen_g : ndarray, optional
        Use these fixed-part values instead of a forest and never refit
        (implies ``freeze_fixed_part``).
    """
    if frozen_g is not None:
        config = replace(config, freeze_fixed_part=True)
    state = init_em(panel, config)
    if frozen_g is not None:
        g = np.asarray(frozen_g, dtype=float)
        if g.shape != panel.y.shape:
            raise InvalidInputError("frozen_g must have one value per observation")
        state.g = g.copy()
        resid = panel.y - g
        state.sigma = max(float(np.mean(_rho(resid, config.tau))), SIGMA_MIN)
        if config.alpha_init == "gauss_hermite":
            scale = float(np.median(np.abs(resid)))
            state.alpha = gauss_hermite(config.K).nodes * (scale if scale > 0 else 1.0)
    trace = [observed_log_likelihood(panel, state)]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        try:
            W, pi = e_step(panel, state)
            state = state.copy(W=W, pi=_floor_pi(pi))
            if not config.freeze_fixed_part:
                forest, g = refit_fixed_part(panel, state, config)
                state = state.copy(forest=forest, g=g, offset=0.0)
            alpha, sigma, V, starved = _m_step(panel, state, config)
        except NumericalDegeneracyError as exc:
            raise NumericalDegeneracyError(str(exc), iteration=it) from exc
        state = center_mixture(state.copy(alpha=alpha, sigma=sigma, V=V, frozen=starved))
        trace.append(observed_log_likelihood(panel, state))
        log.debug("EM iteration %d: loglik %.6f", it, trace[-1])
        if abs(trace[-1] - trace[-2]) < config.loglik_tol:
            converged = True
            break
    W, _ = e_step(panel, state)
    state = state.copy(W=W)
    return FmQrfModel(state=state, assignment=np.argmax(W, axis=1), trace=trace,
                      config=config, labels=panel.labels,
                      feature_names=list(panel.feature_names),
                      converged=converged, n_iter=it)


def predict_fm_qrf(model, X, units=None):
    """Quantile predictions ``g(x) + alpha``.

    Known units use their MAP component; unknown units (or ``units=None``)
    get the mixing-weighted mean ``sum_k pi_k alpha_k``.
    """
    state = model.state
    X = check_features(X, len(model.feature_names))
    g = state.forest.quantiles(X, [state.tau])[:, 0] + state.offset
    shift = np.full(X.shape[0], float(state.pi @ state.alpha))
    if units is not None:
        units = np.asarray(units)
        if units.shape != (X.shape[0],):
            raise InvalidInputError("units must have one label per row")
        comp = model.component_of(units)
        known = comp >= 0
        shift[known] = state.alpha[comp[known]]
    return g + shift


@dataclass
class BootstrapResult:
    mean: np.ndarray
    se: np.ndarray
    replicates: np.ndarray
    n_failed: int


def bootstrap_se(panel, config, B, X_query, seed=0):
    """Unit-level bootstrap of population-level predictions at ``X_query``.

    Replicate ``b`` resamples units with replacement using a generator
    seeded by ``(seed, b)`` and refits the whole model with a forest seed
    derived from the same pair. Failed replicates are dropped and counted.
    """
    if B < 1:
        raise InvalidConfigError("B must be >= 1")
    X_query = check_features(X_query, panel.X.shape[1])
    reps, failed = [], 0
    for b in range(B):
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, b])
        codes = rng.integers(0, panel.n_units, size=panel.n_units)
        boot = panel.subset_units(codes)
        forest_seed = int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, b]).generate_state(1)[0])
        cfg = replace(config, forest=replace(config.forest, seed=forest_seed),
                      K=min(config.K, boot.n_units))
        try:
            model = fit_fm_qrf(boot, cfg)
        except MixQRFError as exc:
            log.warning("bootstrap replicate %d failed: %s", b, exc)
            failed += 1
            continue
        reps.append(predict_fm_qrf(model, X_query))
    if not reps:
        raise NumericalDegeneracyError("every bootstrap replicate failed")
    reps = np.vstack(reps)
    return BootstrapResult(mean=reps.mean(axis=0), se=reps.std(axis=0),
                           replicates=reps, n_failed=failed)


class FMQRF(RegressorMixin, BaseEstimator):
    """Finite-mixture quantile regression forest.

    Parameters
    ----------
    tau : float, default=0.5
    n_components : int, default=3
        Number of mass points K of the random intercept.
    m_step : {"closed_form", "nelder_mead"}
    max_iter, loglik_tol : EM stopping rule.
    n_trees, mtry, min_node_size, max_depth : forest settings.
    alpha_init : {"gauss_hermite", "zero"}
    random_state : int
    """

    def __init__(self, tau=0.5, n_components=3, m_step="closed_form", max_iter=50,
                 loglik_tol=1e-4, n_trees=100, mtry=None, min_node_size=5,
                 max_depth=None, v_floor=1e-6, alpha_init="gauss_hermite",
                 random_state=0, n_jobs=1):
        self.tau = tau
        self.n_components = n_components
        self.m_step = m_step
        self.max_iter = max_iter
        self.loglik_tol = loglik_tol
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.v_floor = v_floor
        self.alpha_init = alpha_init
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        forest = TrainConfig(n_trees=self.n_trees, mtry=self.mtry,
                             min_node_size=self.min_node_size,
                             max_depth=self.max_depth, seed=self.random_state)
        return EmConfig(tau=self.tau, K=self.n_components, max_iter=self.max_iter,
                        loglik_tol=self.loglik_tol, m_step=self.m_step,
                        forest=forest, v_floor=self.v_floor,
                        seed=self.random_state, alpha_init=self.alpha_init,
                        n_jobs=self.n_jobs)

    def fit(self, X, y, groups):
        """Fit on stacked panel rows; ``groups`` holds the unit label of each row."""
        panel = PanelDataset.from_arrays(X, y, groups)
        self.model_ = fit_fm_qrf(panel, self._config())
        self.n_features_in_ = panel.X.shape[1]
        return self

    def predict(self, X, groups=None):
        check_is_fitted(self, "model_")
        return predict_fm_qrf(self.model_, X, groups)

    @property
    def alpha_(self):
        return self.model_.state.alpha

    @property
    def pi_(self):
        return self.model_.state.pi

    @property
    def sigma_(self):
        return self.model_.state.sigma

    def score(self, X, y, groups=None):
        """Negative mean check loss."""
        u = np.asarray(y, dtype=float) - self.predict(X, groups)
        return -float(np.mean(_rho(u, self.tau)))
