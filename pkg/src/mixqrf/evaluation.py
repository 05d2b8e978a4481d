"""Quantile forecast evaluation: check loss, VaR backtests and accuracy metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import xlogy

from .exceptions import InvalidInputError, SingularDesignError
from .numerics import chi_square_sf, ols_solve

__all__ = [
    "TestResult",
    "BacktestReport",
    "check_loss",
    "quantile_loss",
    "violations",
    "kupiec_uc",
    "christoffersen_cc",
    "dq_test",
    "backtest",
    "accuracy_metrics",
]


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    n_violations: int
    degenerate: bool = False

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BacktestReport:
    tau: float
    hits: np.ndarray
    uc: TestResult
    cc: TestResult
    dq: TestResult
    ae_ratio: float
    avg_check_loss: float

    @property
    def n_violations(self):
        return int(self.hits.sum())

    def passes(self, level=0.01):
        """True when every test's p-value exceeds ``level``."""
        return all(t.p_value > level for t in (self.uc, self.cc, self.dq))

    def to_dict(self):
        return {
            "tau": self.tau,
            "n": int(self.hits.size),
            "n_violations": self.n_violations,
            "ae_ratio": self.ae_ratio,
            "avg_check_loss": self.avg_check_loss,
            "uc": self.uc.to_dict(),
            "cc": self.cc.to_dict(),
            "dq": self.dq.to_dict(),
        }


def _tau(tau):
    tau = float(tau)
    if not 0 < tau < 1:
        raise InvalidInputError("tau must lie in (0, 1)")
    return tau


def check_loss(u, tau):
    """Elementwise check (pinball) loss ``u * (tau - 1{u < 0})``."""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def quantile_loss(y, q, tau):
    """Mean check loss of the residuals ``y - q``."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    if y.shape != q.shape:
        raise InvalidInputError("y and q must have the same length")
    return float(np.mean(check_loss(y - q, _tau(tau))))


def violations(y, q):
    """Hit sequence ``y_t < q_t``; ties are not violations."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    if y.shape != q.shape:
        raise InvalidInputError("y and q must have the same length")
    return y < q


def _bernoulli_loglik(x, n, p):
    return xlogy(x, p) + xlogy(n - x, 1 - p)


def kupiec_uc(hits, tau):
    """Unconditional coverage likelihood-ratio test (1 df)."""
    tau = _tau(tau)
    hits = np.asarray(hits, dtype=bool)
    n = hits.size
    if n < 1:
        raise InvalidInputError("need at least one observation")
    x = int(hits.sum())
    lr = -2.0 * (_bernoulli_loglik(x, n, tau) - _bernoulli_loglik(x, n, x / n))
    lr = max(lr, 0.0)
    return TestResult(lr, 1, chi_square_sf(lr, 1), x)


def _transition_counts(hits):
    prev, nxt = hits[:-1], hits[1:]
    n00 = int(np.sum(~prev & ~nxt))
    n01 = int(np.sum(~prev & nxt))
    n10 = int(np.sum(prev & ~nxt))
    n11 = int(np.sum(prev & nxt))
    return n00, n01, n10, n11


def independence_lr(hits):
    """First-order Markov independence statistic."""
    hits = np.asarray(hits, dtype=bool)
    n00, n01, n10, n11 = _transition_counts(hits)
    pi01 = n01 / (n00 + n01) if n00 + n01 else 0.0
    pi11 = n11 / (n10 + n11) if n10 + n11 else 0.0
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    markov = (_bernoulli_loglik(n01, n00 + n01, pi01)
              + _bernoulli_loglik(n11, n10 + n11, pi11))
    iid = _bernoulli_loglik(n01 + n11, n00 + n01 + n10 + n11, pi)
    return max(-2.0 * (iid - markov), 0.0)


def christoffersen_cc(hits, tau):
    """Conditional coverage test: UC plus Markov independence (2 df)."""
    hits = np.asarray(hits, dtype=bool)
    if hits.size < 2:
        raise InvalidInputError("need at least two observations")
    uc = kupiec_uc(hits, tau)
    lr = uc.statistic + independence_lr(hits)
    return TestResult(lr, 2, chi_square_sf(lr, 2), uc.n_violations)


def dq_test(y, q, tau, n_lags=4, include_quantile=True):
    """Dynamic quantile test.

    Regresses ``Hit_t = 1{y_t < q_t} - tau`` on an intercept, ``n_lags``
    lagged hits and (optionally) the forecast ``q_t``. A singular design
    (e.g. no violations at all) is reported as degenerate with p-value 1.
    """
    tau = _tau(tau)
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    hit_bool = violations(y, q)
    n = y.size
    if n <= n_lags + 2:
        raise InvalidInputError("series too short for the requested lags")
    hit = hit_bool - tau
    cols = [np.ones(n - n_lags)]
    cols += [hit[n_lags - j:n - j] for j in range(1, n_lags + 1)]
    if include_quantile:
        cols.append(q[n_lags:])
    X = np.column_stack(cols)
    target = hit[n_lags:]
    df = X.shape[1]
    x = int(hit_bool.sum())
    try:
        beta = ols_solve(X, target)
    except SingularDesignError:
        return TestResult(0.0, df, 1.0, x, degenerate=True)
    fitted = X @ beta
    stat = float(fitted @ fitted / (tau * (1 - tau)))
    return TestResult(stat, df, chi_square_sf(max(stat, 0.0), df), x)


def backtest(y, q, tau, n_lags=4):
    """Run the UC, CC and DQ tests plus AE ratio and average check loss."""
    tau = _tau(tau)
    hits = violations(y, q)
    n = hits.size
    return BacktestReport(
        tau=tau, hits=hits, uc=kupiec_uc(hits, tau),
        cc=christoffersen_cc(hits, tau), dq=dq_test(y, q, tau, n_lags),
        ae_ratio=float(hits.sum() / (n * tau)),
        avg_check_loss=quantile_loss(y, q, tau))


def _unit_mean(values, groups):
    """Average within units first, then across units (plain mean if no units)."""
    if groups is None:
        return float(np.mean(values))
    _, inv = np.unique(groups, return_inverse=True)
    sums = np.bincount(inv, weights=values)
    counts = np.bincount(inv)
    return float(np.mean(sums / counts))


def accuracy_metrics(q_hat, y, tau, q_true=None, null_q=None, benchmark_q=None,
                     groups=None):
    """Accuracy summary of a quantile forecast.

    Returns a dict with ``RAMP`` (share of ``y`` below ``q_hat``) and
    ``check_loss`` always; ``MAE``/``MSE`` against the true quantile when
    ``q_true`` is given; ``pseudo_R2`` against a null forecast; and
    ``pct_loss`` = loss(model) / loss(benchmark). With ``groups`` the
    averages are taken per unit first and then across units.
    """
    tau = _tau(tau)
    q_hat = np.asarray(q_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if q_hat.shape != y.shape:
        raise InvalidInputError("q_hat and y must have the same length")
    out = {
        "RAMP": _unit_mean((y < q_hat).astype(float), groups),
        "check_loss": float(np.mean(check_loss(y - q_hat, tau))),
    }
    if q_true is not None:
        q_true = np.asarray(q_true, dtype=float)
        if q_true.shape != y.shape:
            raise InvalidInputError("q_true must match y")
        err = q_true - q_hat
        out["MAE"] = _unit_mean(np.abs(err), groups)
        out["MSE"] = _unit_mean(err ** 2, groups)
    if null_q is not None:
        null_q = np.broadcast_to(np.asarray(null_q, dtype=float), y.shape)
        denom = np.sum(check_loss(y - null_q, tau))
        out["pseudo_R2"] = float(1 - np.sum(check_loss(y - q_hat, tau)) / denom)
    if benchmark_q is not None:
        benchmark_q = np.broadcast_to(np.asarray(benchmark_q, dtype=float), y.shape)
        out["pct_loss"] = float(np.mean(check_loss(y - q_hat, tau))
                                / np.mean(check_loss(y - benchmark_q, tau)))
    return out
