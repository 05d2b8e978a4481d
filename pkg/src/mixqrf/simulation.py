"""Simulated clustered panels with a nonlinear fixed part and random intercepts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import InvalidInputError
from .fmqrf import PanelDataset

__all__ = [
    "Scenario",
    "SCENARIOS",
    "SimulatedPanel",
    "g_true",
    "simulate_scenario",
    "error_quantile",
    "theoretical_quantile",
]


@dataclass(frozen=True)
class Scenario:
    """Random-effect and error family plus the random-effect scale."""

    name: str
    family: str
    prev_class: str
    sigma_b: float

    def __post_init__(self):
        if self.family not in ("normal", "t3"):
            raise InvalidInputError("family must be 'normal' or 't3'")
        if not self.sigma_b > 0:
            raise InvalidInputError("sigma_b must be positive")

    def draw(self, rng, size):
        if self.family == "normal":
            return rng.standard_normal(size)
        return rng.standard_t(3, size)


SCENARIOS = {
    "NN-S": Scenario("NN-S", "normal", "small", 0.5),
    "NN-L": Scenario("NN-L", "normal", "large", 2.0),
    "TT-S": Scenario("TT-S", "t3", "small", 0.5),
    "TT-L": Scenario("TT-L", "t3", "large", 2.0),
}


def _scenario(scenario):
    if isinstance(scenario, Scenario):
        return scenario
    try:
        return SCENARIOS[scenario]
    except KeyError:
        raise InvalidInputError(f"unknown scenario {scenario!r}") from None


def g_true(X):
    """``2 x1 + x2^2 + 4 * 1{x3 > 0} + 2 x3 log|x1|``."""
    X = np.asarray(X, dtype=float)
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    with np.errstate(divide="ignore"):
        return 2 * x1 + x2 ** 2 + 4.0 * (x3 > 0) + 2 * x3 * np.log(np.abs(x1))


@dataclass
class SimulatedPanel:
    scenario: Scenario
    train: PanelDataset
    test: PanelDataset
    b: np.ndarray
    g_train: np.ndarray
    g_test: np.ndarray

    def oracle(self, split, tau):
        """Theoretical quantile of every row of ``split`` ('train' or 'test')."""
        panel = self.train if split == "train" else self.test
        g = self.g_train if split == "train" else self.g_test
        return g + self.b[panel.unit] + error_quantile(self.scenario, tau)


def _panel(X, y, unit, n_units):
    return PanelDataset(unit=unit, y=y, X=X, labels=np.arange(n_units),
                        feature_names=["x1", "x2", "x3"])


def simulate_scenario(scenario, N=100, T_train=5, test_sizes=(9, 27, 45, 63, 81),
                      seed=0):
    """Balanced training panel and unbalanced test panel for one scenario.

    Test unit ``i`` keeps its training intercept ``b_i`` and gets
    ``test_sizes[i % len(test_sizes)]`` observations.
    """
    sc = _scenario(scenario)
    if N < 1 or T_train < 1 or not test_sizes or min(test_sizes) < 1:
        raise InvalidInputError("panel sizes must be positive")
    rng = np.random.default_rng(seed)
    b = sc.sigma_b * sc.draw(rng, N)

    def block(sizes):
        unit = np.repeat(np.arange(N), sizes)
        X = rng.standard_normal((unit.size, 3))
        g = g_true(X)
        y = g + b[unit] + sc.draw(rng, unit.size)
        return X, y, unit, g

    Xtr, ytr, utr, gtr = block(np.full(N, T_train))
    te_sizes = np.array([test_sizes[i % len(test_sizes)] for i in range(N)])
    Xte, yte, ute, gte = block(te_sizes)
    return SimulatedPanel(scenario=sc, train=_panel(Xtr, ytr, utr, N),
                          test=_panel(Xte, yte, ute, N), b=b,
                          g_train=gtr, g_test=gte)


def error_quantile(scenario, tau):
    """``F_eps^{-1}(tau)`` for the scenario's error family."""
    if not 0 < tau < 1:
        raise InvalidInputError("tau must lie in (0, 1)")
    sc = _scenario(scenario)
    return float(stats.norm.ppf(tau) if sc.family == "normal" else stats.t.ppf(tau, 3))


def theoretical_quantile(panel, i, x, tau):
    """``g(x) + b_i + F_eps^{-1}(tau)`` for unit ``i`` of a simulated panel."""
    x = np.asarray(x, dtype=float)
    return g_true(x) + panel.b[i] + error_quantile(panel.scenario, tau)
