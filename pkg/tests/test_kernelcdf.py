import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.special import ndtr

from knobsync.kernelcdf import (
    ResidualCdf,
    cdf_eval,
    ecdf_eval,
    fit_residual_cdf,
    gamma_mom_fit,
    ig_density_eval,
    plugin_bandwidth,
    rig_density_eval,
)


def test_ecdf_examples():
    s = np.array([1.0, 2.0, 3.0])
    assert ecdf_eval(s, 2.0) == pytest.approx(2 / 3)
    assert ecdf_eval(s, 0.5) == 0.0
    assert ecdf_eval(s, 3.0) == 1.0
    assert ecdf_eval(s, 10.0) == 1.0


def test_gamma_mom_exact():
    s = np.array([1.0, 1.0, 3.0, 3.0])  # mean 2, variance (ddof 1) 4/3
    shape, scale = gamma_mom_fit(s)
    assert shape == pytest.approx(4 / (4 / 3))
    assert scale == pytest.approx((4 / 3) / 2)
    s = np.array([2 - math.sqrt(1.5), 2.0, 2.0, 2 + math.sqrt(1.5)])  # mean 2, variance 1
    assert gamma_mom_fit(s) == pytest.approx((4.0, 0.5))


def test_gamma_mom_errors():
    with pytest.raises(ValueError):
        gamma_mom_fit(np.full(5, 2.0))
    with pytest.raises(ValueError):
        gamma_mom_fit(np.array([0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        gamma_mom_fit(np.array([1.0]))


def test_gamma_mom_monte_carlo():
    rng = np.random.default_rng(0)
    n = 100_000
    s = rng.gamma(3.0, 0.5, n)
    shape, scale = gamma_mom_fit(s)
    # delta-method standard errors from the first four gamma moments
    k, t = 3.0, 0.5
    m1 = k * t
    var = k * t * t
    mu3 = 2 * k * t ** 3
    mu4 = 3 * k * (k + 2) * t ** 4
    cov = np.array([[var, mu3], [mu3, mu4 - var * var]]) / n
    grad_shape = np.array([2 * m1 / var, -m1 * m1 / var ** 2])
    grad_scale = np.array([-var / m1 ** 2, 1 / m1])
    se_shape = math.sqrt(grad_shape @ cov @ grad_shape)
    se_scale = math.sqrt(grad_scale @ cov @ grad_scale)
    assert abs(shape - 3.0) < 3 * se_shape
    assert abs(scale - 0.5) < 3 * se_scale


def mp_bandwidth(shape, scale, n):
    mpmath.mp.dps = 50
    th, tau = mpmath.mpf(shape), mpmath.mpf(scale)
    const = (2 ** (2 * th + 1) * tau ** mpmath.mpf(3.5) * (2 * th - 1) * mpmath.gamma(th - 0.5) * mpmath.gamma(th)
             / (mpmath.sqrt(mpmath.pi) * (6 * th - 4) * (th - 1) * mpmath.gamma(2 * th)))
    return float(mpmath.mpf(n) ** mpmath.mpf(-0.4) * const ** mpmath.mpf(0.4))


@pytest.mark.parametrize("shape,scale,n", [(2.0, 1.0, 100), (13.4, 0.047, 560), (250.0, 0.01, 10_000)])
def test_bandwidth_high_precision_oracle(shape, scale, n):
    b, fallback = plugin_bandwidth(shape, scale, n)
    assert not fallback
    assert b == pytest.approx(mp_bandwidth(shape, scale, n), rel=1e-12)


def test_bandwidth_scaling_rules():
    b32, _ = plugin_bandwidth(2.5, 0.7, 32)
    b1024, _ = plugin_bandwidth(2.5, 0.7, 1024)
    assert b1024 / b32 == pytest.approx(32 ** -0.4, rel=1e-12)
    b1, _ = plugin_bandwidth(2.5, 0.7, 200)
    b2, _ = plugin_bandwidth(2.5, 1.4, 200)
    assert b2 / b1 == pytest.approx(2 ** 1.4, rel=1e-12)


def test_bandwidth_fallback():
    rng = np.random.default_rng(1)
    s = rng.exponential(1.0, 400)
    b, fallback = plugin_bandwidth(1.2, 1.0, 400, s)
    assert fallback
    assert b == pytest.approx(np.std(s, ddof=1) * 400 ** -0.4)
    cdf = fit_residual_cdf(rng.exponential(1.0, 400))  # shape near 1
    assert cdf.fallback


def test_single_sample_substitution():
    cdf = ResidualCdf(np.array([1.0]), 0.1, 2.0, 1.0)
    expected = ndtr(1.1 / math.sqrt(0.1)) - ndtr(0.1 / math.sqrt(0.1))
    assert cdf_eval(cdf, 1.0) == pytest.approx(expected, rel=1e-14)


def test_upper_limit():
    rng = np.random.default_rng(2)
    s = rng.gamma(2.0, 1.0, 300)
    cdf = fit_residual_cdf(s)
    lim = np.mean(ndtr((s + cdf.bandwidth) / np.sqrt(s * cdf.bandwidth)))
    assert cdf_eval(cdf, 1e6) == pytest.approx(lim, abs=1e-15)
    assert ndtr(2.0) <= cdf.upper_limit <= 1.0


def test_zero_samples_are_floored():
    cdf = ResidualCdf(np.array([0.0, 1.0, 2.0]), 0.05, 2.0, 1.0)
    vals = cdf_eval(cdf, np.linspace(0, 5, 50))
    assert np.all(np.isfinite(vals))
    assert np.all(np.diff(vals) >= 0)


def test_invalid_construction():
    with pytest.raises(ValueError):
        ResidualCdf(np.array([-1.0, 1.0]), 0.1, 2.0, 1.0)
    with pytest.raises(ValueError):
        ResidualCdf(np.array([1.0, 1.0]), 0.0, 2.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 20.0), st.integers(5, 300))
def test_monotone_and_bounded(seed, shape, n):
    rng = np.random.default_rng(seed)
    s = rng.gamma(shape, 1.0, n)
    cdf = fit_residual_cdf(s)
    grid = np.linspace(-1, s.max() * 2 + 1, 400)
    vals = cdf_eval(cdf, grid)
    assert np.all(np.diff(vals) >= -1e-15)
    assert np.all((vals >= 0) & (vals <= 1))


def test_close_to_ecdf():
    rng = np.random.default_rng(3)
    for shape in (2.0, 5.0, 12.0):
        s = np.sort(rng.gamma(shape, 1.0, 2000))
        cdf = fit_residual_cdf(s)
        grid = np.linspace(0, s.max(), 300)
        assert np.max(np.abs(cdf_eval(cdf, grid) - ecdf_eval(s, grid))) < 0.05


def test_bias_shrinks_with_bandwidth():
    # common random numbers: the same samples are smoothed with b and b/2
    rng = np.random.default_rng(4)
    n, reps = 10_000, 200
    ys = np.array([0.5, 1.0, 2.0])
    b0 = 4 * plugin_bandwidth(2.0, 1.0, n)[0]
    bias = {b0: np.zeros(3), b0 / 2: np.zeros(3)}
    for _ in range(reps):
        s = rng.gamma(2.0, 1.0, n)
        for b in bias:
            bias[b] += cdf_eval(ResidualCdf(s, b, 2.0, 1.0), ys) / reps
    truth = stats.gamma.cdf(ys, 2.0)
    ratio = (bias[b0 / 2] - truth) / (bias[b0] - truth)
    assert np.all((ratio >= 0.3) & (ratio <= 0.7)), ratio


def test_rig_density_integrates_and_mean():
    for mu, lam in [(1.0, 2.0), (0.5, 5.0), (2.0, 0.7)]:
        total = integrate.quad(lambda v: rig_density_eval(v, mu, lam), 0, np.inf, epsabs=1e-12, limit=200)[0]
        mean = integrate.quad(lambda v: v * rig_density_eval(v, mu, lam), 0, np.inf, epsabs=1e-12, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-6)
        assert mean == pytest.approx(1 / mu + 1 / lam, abs=1e-6)
    assert rig_density_eval(0.0, 1.0, 1.0) == 0.0
    assert rig_density_eval(-2.0, 1.0, 1.0) == 0.0


def test_ig_density_matches_scipy():
    for mu, lam in [(1.0, 2.0), (0.5, 5.0)]:
        u = np.linspace(0.05, 4, 30)
        ref = stats.invgauss.pdf(u, mu / lam, scale=lam)
        np.testing.assert_allclose(ig_density_eval(u, mu, lam), ref, rtol=1e-10)
        total = integrate.quad(lambda v: ig_density_eval(v, mu, lam), 0, np.inf, epsabs=1e-12, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-6)
    assert ig_density_eval(0.0, 1.0, 1.0) == 0.0
