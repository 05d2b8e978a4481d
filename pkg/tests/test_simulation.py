import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from mixqrf.exceptions import InvalidInputError
from mixqrf.simulation import (
    SCENARIOS, error_quantile, g_true, simulate_scenario, theoretical_quantile)


def t3_quantile_by_inversion(tau):
    # t(3) CDF through the regularised incomplete beta, then bracketed root
    def cdf(x):
        z = 3 / (3 + x * x)
        half = 0.5 * special.betainc(1.5, 0.5, z)
        return 1 - half if x > 0 else half
    return optimize.brentq(lambda x: cdf(x) - tau, -50, 50, xtol=1e-12)


def normal_quantile_by_inversion(tau):
    def cdf(x):
        return 0.5 + integrate.quad(lambda s: np.exp(-s * s / 2), 0, x)[0] / np.sqrt(2 * np.pi)
    return optimize.brentq(lambda x: cdf(x) - tau, -10, 10, xtol=1e-12)


def test_g_hand_values():
    assert g_true([1.0, 1.0, 1.0]) == pytest.approx(7.0)
    assert g_true([1.0, -1.0, -1.0]) == pytest.approx(3.0)


def test_same_seed_bit_identical():
    a = simulate_scenario("TT-L", seed=5)
    b = simulate_scenario("TT-L", seed=5)
    np.testing.assert_array_equal(a.train.y, b.train.y)
    np.testing.assert_array_equal(a.test.X, b.test.X)
    np.testing.assert_array_equal(a.b, b.b)


def test_panel_shapes():
    sp = simulate_scenario("NN-S", N=10, T_train=5, test_sizes=(9, 27), seed=0)
    assert sp.train.n_obs == 50
    assert np.all(sp.train.sizes() == 5)
    assert sp.test.sizes().tolist() == [9, 27] * 5


def test_test_units_share_intercepts():
    sp = simulate_scenario("NN-L", N=5, seed=1)
    resid_tr = sp.train.y - sp.g_train
    resid_te = sp.test.y - sp.g_test
    # unit means of y - g estimate b_i in both splits
    for i in range(5):
        assert np.mean(resid_te[sp.test.unit == i]) == pytest.approx(sp.b[i], abs=1.5)
        assert np.mean(resid_tr[sp.train.unit == i]) == pytest.approx(sp.b[i], abs=2.0)


def test_oracle_quantile_values():
    sp = simulate_scenario("NN-S", N=3, seed=0)
    x = np.array([0.2, -0.4, 1.1])
    base = g_true(x) + sp.b[1]
    assert theoretical_quantile(sp, 1, x, 0.5) == pytest.approx(base)
    assert theoretical_quantile(sp, 1, x, 0.9) - base == pytest.approx(1.2816, abs=1e-3)
    tt = simulate_scenario("TT-S", N=3, seed=0)
    base = g_true(x) + tt.b[1]
    assert theoretical_quantile(tt, 1, x, 0.9) - base == pytest.approx(1.6377, abs=1e-3)


@pytest.mark.parametrize("tau", [0.05, 0.1, 0.5, 0.9, 0.975])
def test_error_quantiles_match_inversion(tau):
    assert error_quantile("NN-S", tau) == pytest.approx(normal_quantile_by_inversion(tau), abs=1e-8)
    assert error_quantile("TT-S", tau) == pytest.approx(t3_quantile_by_inversion(tau), abs=1e-8)


def test_oracle_rejects_bad_tau():
    with pytest.raises(InvalidInputError):
        error_quantile("NN-S", 1.0)


def test_unknown_scenario():
    with pytest.raises(InvalidInputError):
        simulate_scenario("XX-S")


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_oracle_coverage(name):
    sp = simulate_scenario(name, N=400, T_train=50, test_sizes=(1,), seed=3)
    for tau in (0.1, 0.5, 0.9):
        q = sp.oracle("train", tau)
        assert np.mean(sp.train.y < q) == pytest.approx(tau, abs=0.01)


def test_large_prev_has_larger_effect_share():
    def share(name):
        sp = simulate_scenario(name, N=2000, T_train=1, seed=0)
        eps = sp.train.y - sp.g_train - sp.b
        return np.var(sp.b) / (np.var(sp.b) + np.var(eps))
    assert share("NN-S") == pytest.approx(0.2, abs=0.05)
    assert share("NN-L") == pytest.approx(0.8, abs=0.05)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.49), st.floats(0.01, 0.49), st.floats(-5, 5))
def test_oracle_monotone_and_shift_equivariant(t1, dt, shift):
    sp = simulate_scenario("TT-L", N=2, T_train=1, test_sizes=(1,), seed=0)
    x = np.array([0.3, 0.1, -0.7])
    lo = theoretical_quantile(sp, 0, x, t1)
    hi = theoretical_quantile(sp, 0, x, t1 + dt)
    assert lo < hi
    sp.b = sp.b + shift
    assert theoretical_quantile(sp, 0, x, t1) == pytest.approx(lo + shift)
