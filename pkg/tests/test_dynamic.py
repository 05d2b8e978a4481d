import numpy as np
import pytest

from mixqrf.dynamic import (
    CaviarParams, CaviarSAV, DynamicMidasQRF, caviar_path, default_warmup,
    expanding_window_forecast, fit_caviar_sav, fit_dynamic_midas_qrf)
from mixqrf.evaluation import quantile_loss
from mixqrf.exceptions import InsufficientHistoryError, InvalidConfigError
from mixqrf.forest import TrainConfig

SMALL = TrainConfig(n_trees=20, min_node_size=5, seed=3)


def garch_like(n, seed):
    rng = np.random.default_rng(seed)
    y = np.empty(n)
    s2 = 1.0
    prev = 0.0
    for t in range(n):
        s2 = 0.1 + 0.85 * s2 + 0.1 * prev ** 2
        prev = np.sqrt(s2) * rng.standard_normal()
        y[t] = prev
    return y


def dyn_data(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = X[:, 0] + (1 + 0.5 * np.abs(X[:, 1])) * rng.standard_normal(n)
    return X, y


def test_flat_parameters_give_constant_path():
    params = CaviarParams(-1.5, 0.0, 0.0, 0.05, -1.5)
    path = caviar_path(params, np.random.default_rng(0).standard_normal(40))
    assert np.all(path == -1.5)


def test_recursion_by_hand():
    params = CaviarParams(0.1, 0.5, -0.2, 0.1, -1.0)
    y = np.array([1.0, -2.0, 0.5])
    q = caviar_path(params, y)
    assert q[0] == -1.0
    assert q[1] == pytest.approx(0.1 + 0.5 * -1.0 - 0.2 * 1.0)
    assert q[2] == pytest.approx(0.1 + 0.5 * q[1] - 0.2 * 2.0)


def test_caviar_iid_hit_rate():
    y = np.random.default_rng(11).standard_normal(1000)
    fit = fit_caviar_sav(y, 0.05, restarts=4, seed=0)
    rate = np.mean(y < fit.forecasts)
    assert abs(rate - 0.05) <= 0.03
    assert fit.loss == pytest.approx(quantile_loss(y, fit.forecasts, 0.05))


def test_caviar_never_worse_than_flat_quantile():
    y = garch_like(500, 2)
    fit = fit_caviar_sav(y, 0.05, restarts=5, seed=1)
    q_star = np.sort(y)[int(np.ceil(0.05 * 500)) - 1]
    flat = CaviarParams(q_star, 0.0, 0.0, 0.05, fit.params.q0)
    assert fit.loss <= quantile_loss(y, caviar_path(flat, y), 0.05) + 1e-12


def test_caviar_captures_volatility_clustering():
    y = garch_like(1500, 4)
    fit = fit_caviar_sav(y, 0.05, restarts=5, seed=0)
    assert fit.params.beta2 < 0
    assert 0 < fit.params.beta1 < 1


def test_caviar_scale_homogeneity():
    y = garch_like(400, 5)
    a = fit_caviar_sav(y, 0.05, restarts=4, seed=0)
    b = fit_caviar_sav(3.0 * y, 0.05, restarts=4, seed=0)
    assert b.loss == pytest.approx(3.0 * a.loss, rel=2e-3)


def test_caviar_constant_series():
    fit = fit_caviar_sav(np.full(60, 2.5), 0.1)
    assert (fit.params.beta0, fit.params.beta1, fit.params.beta2) == (2.5, 0.0, 0.0)
    assert fit.loss == 0.0


def test_caviar_needs_history():
    with pytest.raises(InsufficientHistoryError):
        fit_caviar_sav(np.zeros(10), 0.05)


def test_caviar_estimator_and_next_forecast():
    y = garch_like(300, 1)
    est = CaviarSAV(tau=0.05, restarts=3).fit(y)
    path = est.predict()
    assert path.shape == (300,)
    assert est.next_forecast() == pytest.approx(
        est.params_.next_quantile(path[-1], y[-1]))
    np.testing.assert_allclose(est.predict(y), path)


def test_default_warmup():
    assert default_warmup(100) == 50
    assert default_warmup(1000) == 250


def test_dynamic_bookkeeping():
    X, y = dyn_data(90, 0)
    res = fit_dynamic_midas_qrf((X, y), 0.1, warmup=60, config=SMALL, restarts=2)
    assert res.predictions.shape == (90,)
    assert res.refits[-1].n_train == 90
    assert [r.row for r in res.refits[:-1]] == list(range(60, 90))
    assert np.all(res.source[:60] == "caviar") and np.all(res.source[60:] == "forest")
    # the lagged covariate is exactly the previous emitted forecast
    np.testing.assert_array_equal(res.lag_quant[1:], res.predictions[:-1])


def test_dynamic_no_look_ahead():
    X, y = dyn_data(80, 1)
    base = fit_dynamic_midas_qrf((X, y), 0.1, warmup=50, config=SMALL, restarts=2,
                                 fit_final=False)
    j = 65
    y2 = y.copy()
    y2[j:] += 50.0
    X2 = X.copy()
    X2[j + 1:] *= -3
    pert = fit_dynamic_midas_qrf((X2, y2), 0.1, warmup=50, config=SMALL, restarts=2,
                                 fit_final=False)
    np.testing.assert_array_equal(base.predictions[:j + 1], pert.predictions[:j + 1])
    assert not np.array_equal(base.predictions[j + 1:], pert.predictions[j + 1:])


def test_deleting_last_row_only_changes_last_prediction():
    X, y = dyn_data(75, 2)
    full = fit_dynamic_midas_qrf((X, y), 0.2, warmup=50, config=SMALL, restarts=2,
                                 fit_final=False)
    short = fit_dynamic_midas_qrf((X[:-1], y[:-1]), 0.2, warmup=50, config=SMALL,
                                  restarts=2, fit_final=False)
    np.testing.assert_array_equal(full.predictions[:-1], short.predictions)


def test_constant_lag_quant_matches_static_forest():
    X, y = dyn_data(80, 3)
    cfg = TrainConfig(n_trees=15, mtry=3, seed=9)
    dyn = fit_dynamic_midas_qrf((X, y), 0.1, warmup=55, config=cfg, restarts=2,
                                lag_quant_override=0.7, fit_final=False)
    static = expanding_window_forecast(X, y, 0.1, warmup=55,
                                       config=TrainConfig(n_trees=15, mtry=2, seed=9))
    np.testing.assert_array_equal(dyn.predictions[55:], static[55:])


def test_refit_schedule():
    X, y = dyn_data(85, 4)
    every1 = fit_dynamic_midas_qrf((X, y), 0.1, warmup=55, config=SMALL, restarts=2,
                                   fit_final=False)
    every10 = fit_dynamic_midas_qrf((X, y), 0.1, warmup=55, config=SMALL, restarts=2,
                                    refit_every=10, fit_final=False)
    assert [r.row for r in every10.refits] == [55, 65, 75]
    assert every1.predictions[55] == every10.predictions[55]
    np.testing.assert_array_equal(every1.predictions[:56], every10.predictions[:56])


def test_static_refit_boundaries_identical():
    X, y = dyn_data(85, 5)
    a = expanding_window_forecast(X, y, 0.1, warmup=55, config=SMALL)
    b = expanding_window_forecast(X, y, 0.1, warmup=55, config=SMALL, refit_every=10)
    for r in (55, 65, 75):
        assert a[r] == b[r]


def test_warmup_validation():
    X, y = dyn_data(60, 0)
    with pytest.raises(InvalidConfigError):
        fit_dynamic_midas_qrf((X, y), 0.1, warmup=60)
    with pytest.raises(InvalidConfigError):
        fit_dynamic_midas_qrf((X, y), 0.1, warmup=10)


def test_dynamic_estimator():
    X, y = dyn_data(70, 6)
    est = DynamicMidasQRF(tau=0.1, warmup=50, n_trees=10, restarts=2).fit(X, y)
    assert est.predictions_.shape == (70,)
    nxt = est.predict(X[:3])
    assert nxt.shape == (3,) and np.all(np.isfinite(nxt))
    assert est.get_params()["refit_every"] == 1
