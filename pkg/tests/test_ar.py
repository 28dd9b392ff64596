import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2pkit import ar, synth
from m2pkit.ar import ArModel
from m2pkit.errors import InsufficientDataError, LengthMismatchError


def brute_force_aic(y, rho_max):
    """Order selection oracle built with explicit loops and numpy.linalg.solve."""
    n_eff = len(y) - rho_max
    scores = {}
    for rho in range(1, rho_max + 1):
        rows = [[1.0] + [y[t - i] for i in range(1, rho + 1)] for t in range(rho_max, len(y))]
        X = np.array(rows)
        target = y[rho_max:]
        beta = np.linalg.solve(X.T @ X, X.T @ target)
        sigma2 = np.mean((target - X @ beta) ** 2)
        scores[rho] = n_eff * math.log(sigma2) + 2 * (rho + 1)
    return min(scores, key=lambda r: (scores[r], r))


def test_fit_recovers_ar1():
    y = synth.ar_process(10_000, (0.8,), sigma=0.01, seed=11)
    m = ar.fit(y, 1)
    assert m.phi[0] == pytest.approx(0.8, abs=0.02)
    assert m.c == pytest.approx(0.0, abs=0.01)
    assert m.sigma2 == pytest.approx(0.01 ** 2, rel=0.05)


def test_fit_recovers_ar2():
    y = synth.ar_process(20_000, (0.5, -0.3), sigma=0.01, seed=12)
    m = ar.fit(y, 2)
    assert m.phi == pytest.approx((0.5, -0.3), abs=0.02)


def test_fit_matches_statsmodels_autoreg():
    from statsmodels.tsa.ar_model import AutoReg

    y = synth.ar_process(3000, (0.6, 0.2, -0.1), c=0.3, sigma=0.05, seed=5)
    m = ar.fit(y, 3)
    res = AutoReg(y, lags=3, trend="c", old_names=False).fit()
    assert m.c == pytest.approx(res.params[0], abs=1e-8)
    assert np.allclose(m.phi, res.params[1:], atol=1e-8)


def test_constant_series_forecasts_constant_exactly():
    m = ar.fit(np.full(40, 3.0), 2)
    assert ar.forecast_one(m, [3.0, 3.0]) == 3.0
    assert np.all(ar.forecast_multi(m, [3.0, 3.0], 20) == 3.0)
    zero = ar.fit(np.zeros(100), 32)
    assert np.all(ar.forecast_multi(zero, np.ones(32), 5) == 1.0)


def test_fit_needs_enough_data():
    with pytest.raises(InsufficientDataError):
        ar.fit(np.arange(10.0), 5)
    ar.fit(np.arange(11.0), 5)
    with pytest.raises(ValueError):
        ar.fit([0.0, 1.0, float("nan"), 2.0], 1)


def test_select_lag_aic():
    y1 = synth.ar_process(20_000, (0.8,), sigma=0.01, seed=21)
    assert ar.select_lag_aic(y1, 8) == 1
    y2 = synth.ar_process(20_000, (0.5, -0.3), sigma=0.01, seed=22)
    assert ar.select_lag_aic(y2, 8) == 2
    assert ar.select_lag_aic(y2, 1) == 1


def test_select_lag_aic_white_noise():
    y = np.random.default_rng(0).normal(0, 1, 5000)
    assert ar.select_lag_aic(y, 8) == 1
    assert np.all(np.abs(ar.fit(y, 8).phi) < 0.05)


@pytest.mark.parametrize("seed", range(4))
def test_select_lag_aic_matches_brute_force(seed):
    y = synth.ar_process(800, (0.4, 0.0, 0.25), sigma=1.0, seed=seed)
    assert ar.select_lag_aic(y, 6) == brute_force_aic(y, 6)


def test_forecast_one_examples():
    assert ar.forecast_one(ArModel(1, 0.0, (1.0,)), [5.0]) == 5.0
    assert ar.forecast_one(ArModel(2, 1.0, (0.5, 0.25)), [2.0, 4.0]) == pytest.approx(3.5, abs=1e-15)
    assert ar.forecast_one(ArModel(3, 0.0, (0.0, 0.0, 0.0)), [9.0, -4.0, 7.0]) == 0.0
    with pytest.raises(LengthMismatchError):
        ar.forecast_one(ArModel(2, 0.0, (1.0, 0.0)), [1.0])


def test_forecast_multi_examples():
    m = ArModel(2, 1.0, (0.5, 0.25))
    assert ar.forecast_multi(m, [2.0, 4.0], 1)[0] == ar.forecast_one(m, [2.0, 4.0])
    assert np.all(ar.forecast_multi(ArModel(1, 0.0, (1.0,)), [7.5], 10) == 7.5)
    with pytest.raises(ValueError):
        ar.forecast_multi(m, [2.0, 4.0], 0)


def test_forecast_multi_hand_iteration():
    m = ArModel(2, 1.0, (0.5, 0.25))
    h = [2.0, 4.0]
    expected = []
    for _ in range(4):
        nxt = 1.0 + 0.5 * h[-1] + 0.25 * h[-2]
        expected.append(nxt)
        h.append(nxt)
    assert np.allclose(ar.forecast_multi(m, [2.0, 4.0], 4), expected, rtol=0, atol=1e-14)


def test_ramp_extrapolates_exactly():
    m = ar.fit(np.arange(100.0), 2)
    # a line does not identify phi; every exact fit has phi_1 + phi_2 = 1 and
    # c = 1 + phi_2 (unit slope), which is all extrapolation needs
    assert sum(m.phi) == pytest.approx(1.0, abs=1e-9)
    assert m.c == pytest.approx(1.0 + m.phi[1], abs=1e-9)
    assert np.allclose(ar.forecast_multi(m, [98.0, 99.0], 5), [100, 101, 102, 103, 104], atol=1e-6)


def test_ramp_fit_is_slope_agnostic():
    # the fit prefers lag weights over the intercept, so a model trained on
    # one ramp extrapolates ramps of any slope, level or direction
    m = ar.fit(np.arange(2000) * 0.001, 32)
    # a small residual intercept remains; it accumulates over 20 steps
    assert abs(m.c) < 1e-6
    for slope, level in ((0.001, 0.0), (-0.0005, 1.6), (0.0, -0.4), (0.003, 5.0)):
        hist = level + slope * np.arange(32)
        expected = level + slope * np.arange(32, 52)
        assert np.allclose(ar.forecast_multi(m, hist, 20), expected, atol=5e-5)


def test_forecast_batches():
    m = ar.fit(synth.ar_process(500, (0.7, 0.1), seed=2), 2)
    hs = np.random.default_rng(1).normal(size=(6, 2))
    batch = ar.forecast_multi(m, hs, 3)
    assert batch.shape == (6, 3)
    for h, row in zip(hs, batch):
        assert np.array_equal(ar.forecast_multi(m, h, 3), row)


series = st.integers(0, 2**16).map(lambda s: synth.ar_process(300, (0.6, -0.2, 0.1), c=0.5, sigma=0.3, seed=s))


@settings(max_examples=40, deadline=None)
@given(series, st.floats(-50, 50))
def test_translation_equivariance(y, k):
    m = ar.fit(y, 3)
    mk = ar.fit(y + k, 3)
    assert np.allclose(mk.phi, m.phi, atol=1e-8)
    assert mk.c == pytest.approx(m.c + k * (1 - sum(m.phi)), abs=1e-8)
    h = y[-3:]
    assert np.allclose(ar.forecast_multi(mk, h + k, 6), ar.forecast_multi(m, h, 6) + k, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(series, st.floats(0.01, 100))
def test_scale_equivariance(y, a):
    m = ar.fit(y, 3)
    ma = ar.fit(a * y, 3)
    assert np.allclose(ma.phi, m.phi, atol=1e-8)
    assert ma.c == pytest.approx(a * m.c, rel=1e-7, abs=1e-10)
    h = y[-3:]
    assert np.allclose(ar.forecast_multi(ma, a * h, 6), a * ar.forecast_multi(m, h, 6), rtol=1e-7)


@settings(max_examples=40, deadline=None)
@given(series)
def test_residual_mean_zero(y):
    m = ar.fit(y, 3)
    pred = np.array([ar.forecast_one(m, y[t - 3:t]) for t in range(3, len(y))])
    resid = y[3:] - pred
    assert abs(resid.mean()) <= 1e-8 * max(1.0, np.abs(y).max())
    assert m.sigma2 == pytest.approx(np.mean(resid ** 2), rel=1e-9)


@given(series, st.integers(1, 8), st.integers(1, 8))
def test_iteration_consistency(y, a, b):
    m = ar.fit(y, 3)
    h = y[-3:]
    first = ar.forecast_multi(m, h, a)
    window = np.concatenate([h, first])[-3:]
    rest = ar.forecast_multi(m, window, b)
    assert np.allclose(ar.forecast_multi(m, h, a + b), np.concatenate([first, rest]), rtol=0, atol=1e-12)


def test_model_json_round_trip(tmp_path):
    m = ar.fit(synth.ar_process(300, (0.5,), seed=4), 4, trained_on="u1:x")
    path = tmp_path / "m.json"
    m.save(path)
    data = json.loads(path.read_text())
    assert set(data) == {"rho", "c", "phi", "sigma2", "trained_on"}
    assert ArModel.load(path) == m


def test_model_validation():
    with pytest.raises(ValueError):
        ArModel(2, 0.0, (1.0,))
    with pytest.raises(ValueError):
        ArModel(1, 0.0, (1.0,), sigma2=-1.0)
    assert ArModel.persistence(3).phi == (1.0, 0.0, 0.0)
