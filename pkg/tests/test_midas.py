import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixqrf.exceptions import (InsufficientDataError, InsufficientHistoryError,
                               InvalidInputError)
from mixqrf.midas import (HighFreqSeries, LowFreqSeries, MidasComponentTransformer,
                          MidasSpec, align_mixed_frequency, beta_weights,
                          midas_component, midas_matrix, midas_pca_component)


def beta_by_hand(K, w1, w2):
    raw = [(k / K) ** (w1 - 1) * (1 - k / K) ** (w2 - 1) for k in range(1, K + 1)]
    return np.array(raw) / sum(raw)


class TestBetaWeights:
    @pytest.mark.parametrize("K", [1, 2, 5, 12])
    def test_flat(self, K):
        np.testing.assert_allclose(beta_weights(K, 1, 1), np.full(K, 1 / K), atol=1e-15)

    def test_k3_fixture(self):
        np.testing.assert_allclose(beta_weights(3, 1, 2), [2 / 3, 1 / 3, 0], atol=1e-12)

    def test_recency(self):
        w = beta_weights(12, 1, 50)
        assert w[0] > 0.99
        assert np.all(np.diff(w[:-1]) < 0) and w[-1] == 0

    @pytest.mark.parametrize("K,w1,w2", [(4, 1.0, 3.0), (6, 2.0, 5.0), (9, 0.7, 1.5)])
    def test_matches_formula(self, K, w1, w2):
        np.testing.assert_allclose(beta_weights(K, w1, w2), beta_by_hand(K, w1, w2), rtol=1e-13)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 40), st.floats(1.0, 60.0))
    def test_normalised_and_decreasing(self, K, w2):
        w = beta_weights(K, 1.0, w2)
        assert abs(w.sum() - 1) < 1e-12
        assert np.all((w >= 0) & (w <= 1))
        if w2 > 1.01 and K > 1:
            assert np.all(np.diff(w) < 0)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            beta_weights(3, 0.0, 2.0)
        with pytest.raises(InvalidInputError):
            beta_weights(3, 1.0, -1.0)


class TestMidasComponent:
    def test_constant_series(self):
        z = np.full(10, 3.7)
        assert midas_component(z, 8, K=4, omega2=7.0) == pytest.approx(3.7)

    def test_single_lag(self):
        z = np.array([5.0, -1.0, 2.0, 9.0])
        assert midas_component(z, 3, K=1, omega2=4.0) == 2.0

    def test_hand_filter(self):
        # periods 0,1,2 hold 1,2,3; the component for period 3 is
        # (2/3)*3 + (1/3)*2 + 0*1
        z = np.array([1.0, 2.0, 3.0])
        assert midas_component(z, 3, K=3, omega2=2.0) == pytest.approx(8 / 3, abs=1e-14)

    def test_insufficient_history(self):
        with pytest.raises(InsufficientHistoryError):
            midas_component(np.arange(3.0), 2, K=3, omega2=2.0)

    def test_irregular_period_labels(self):
        low = LowFreqSeries(period=[10, 20, 30], values=[1.0, 2.0, 3.0])
        assert midas_component(low, 25, K=2, omega2=1.0) == pytest.approx(1.5)


def ar1(n, phi, rng):
    z = np.zeros(n)
    for t in range(1, n):
        z[t] = phi * z[t - 1] + rng.normal()
    return z


class TestPCAComponent:
    def test_singleton_grid_is_centered_mc(self, rng):
        low = LowFreqSeries(np.arange(40), rng.normal(size=40))
        spec = MidasSpec(lag_count=4, omega2_grid=(5.0,))
        periods, scores = midas_pca_component(low, spec)
        mc, _ = midas_matrix(low.period, low.values[:, 0], spec, periods)
        np.testing.assert_allclose(scores, mc[:, 0] - mc[:, 0].mean(), atol=1e-12)

    def test_repeated_grid_value(self, rng):
        low = LowFreqSeries(np.arange(50), ar1(50, 0.8, rng))
        a = midas_pca_component(low, MidasSpec(3, omega2_grid=(2.0, 8.0)))[1]
        b = midas_pca_component(low, MidasSpec(3, omega2_grid=(2.0, 2.0, 8.0, 2.0)))[1]
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_scores_track_each_column(self, rng):
        low = LowFreqSeries(np.arange(200), ar1(200, 0.9, rng))
        spec = MidasSpec(lag_count=6, omega2_grid=(1.5, 5.0, 50.0))
        periods, scores = midas_pca_component(low, spec)
        mc, _ = midas_matrix(low.period, low.values[:, 0], spec, periods)
        for j in range(3):
            assert np.corrcoef(scores, mc[:, j])[0, 1] > 0.9

    def test_too_few_periods(self):
        low = LowFreqSeries(np.arange(4), np.arange(4.0))
        with pytest.raises(InvalidInputError):
            midas_pca_component(low, MidasSpec(lag_count=3))


def toy_calendar():
    period = np.repeat([1, 2], 3)
    index = np.tile([1, 2, 3], 2)
    y = np.arange(6.0)
    X = 10 + np.arange(6.0)
    high = HighFreqSeries(period, index, y, X[:, None], ["x"])
    low = LowFreqSeries([1, 2], [100.0, 200.0], ["z"])
    return high, low


class TestAlign:
    def test_toy_calendar(self):
        high, low = toy_calendar()
        table = align_mixed_frequency(high, low, MidasSpec(lag_count=1, omega2_grid=(2.0,)),
                                      use_pca=False, omega2=2.0)
        assert table.n_rows == 3
        np.testing.assert_array_equal(table.period, [2, 2, 2])
        np.testing.assert_array_equal(table.y, [3, 4, 5])
        # daily covariate lagged one step across the period boundary
        np.testing.assert_array_equal(table.X[:, 0], [12, 13, 14])
        np.testing.assert_array_equal(table.X[:, 1], [100, 100, 100])
        assert table.feature_names == ["x", "MC_z"]
        assert table.n_dropped == 3

    def test_first_row_dropped_without_lows(self):
        high, _ = toy_calendar()
        table = align_mixed_frequency(high, None)
        assert table.n_rows == 5
        assert table.y[0] == 1.0

    def test_contemporaneous_flag(self):
        high, _ = toy_calendar()
        table = align_mixed_frequency(high, None, contemporaneous=["x"])
        np.testing.assert_array_equal(table.X[:, 0], high.X[1:, 0])

    def test_outcome_lags(self):
        high, _ = toy_calendar()
        table = align_mixed_frequency(high, None, outcome_lags=2)
        np.testing.assert_array_equal(table.X[:, 1], high.y[1:-1])
        np.testing.assert_array_equal(table.X[:, 2], high.y[:-2])

    def test_pca_singleton_matches_single_filter(self, rng):
        n_per, T = 5, 30
        period = np.repeat(np.arange(T), n_per)
        index = np.tile(np.arange(n_per), T)
        high = HighFreqSeries(period, index, rng.normal(size=T * n_per),
                              rng.normal(size=(T * n_per, 1)))
        low = LowFreqSeries(np.arange(T), ar1(T, 0.7, rng))
        spec = MidasSpec(lag_count=3, omega2_grid=(4.0,))
        a = align_mixed_frequency(high, low, spec, use_pca=False, omega2=4.0)
        b = align_mixed_frequency(high, low, spec, use_pca=True)
        np.testing.assert_allclose(b.X[:, -1], a.X[:, -1] - a.X[:, -1][np.unique(a.period, return_index=True)[1]].mean(), atol=1e-12)

    def test_no_lookahead(self, rng):
        T, n_per = 25, 4
        period = np.repeat(np.arange(T), n_per)
        index = np.tile(np.arange(n_per), T)
        high = HighFreqSeries(period, index, rng.normal(size=T * n_per),
                              rng.normal(size=(T * n_per, 2)))
        z = ar1(T, 0.5, rng)
        spec = MidasSpec(lag_count=3, omega2_grid=(3.0,))
        base = align_mixed_frequency(high, LowFreqSeries(np.arange(T), z), spec,
                                     use_pca=False, omega2=3.0)
        for s in (5, 12, 20):
            z2 = z.copy()
            z2[s:] += rng.normal(size=T - s) * 10
            pert = align_mixed_frequency(high, LowFreqSeries(np.arange(T), z2), spec,
                                         use_pca=False, omega2=3.0)
            rows = base.period <= s
            np.testing.assert_array_equal(base.X[rows], pert.X[rows])
            assert not np.array_equal(base.X[~rows], pert.X[~rows])

    def test_fitted_transformer_has_no_lookahead(self, rng):
        T = 30
        z = ar1(T, 0.8, rng)
        tr = MidasComponentTransformer(lag_count=3).fit(np.arange(3, 20),
                                                        lows=LowFreqSeries(np.arange(T), z))
        before = tr.transform(np.arange(3, 20))
        z2 = z.copy()
        z2[20:] = 99.0
        tr.lows_ = LowFreqSeries(np.arange(T), z2)
        np.testing.assert_array_equal(tr.transform(np.arange(3, 20)), before)

    def test_empty_after_trimming(self):
        high, low = toy_calendar()
        with pytest.raises(InsufficientDataError):
            align_mixed_frequency(high, low, MidasSpec(lag_count=5))

    def test_bad_timestamps(self):
        with pytest.raises(InvalidInputError):
            HighFreqSeries([1, 1], [2, 1], [0.0, 1.0], np.zeros((2, 1)))
