from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from fracmc.errors import Exhausted, GridMismatch
from fracmc.fbm import TimeGrid, davies_harte, sampler
from fracmc.models import (
    FsabrParams,
    RfsvParams,
    fou_stationary_variance,
    fsabr_from_normals,
    rfsv_full_circle,
    simulate_fsabr,
    simulate_rfsv,
)
from fracmc.rng import EntropySource, PseudoSource

# ---------------------------------------------------------------- parameters


def test_param_validation():
    with pytest.raises(ValueError):
        RfsvParams(sigma0=0.0)
    with pytest.raises(ValueError):
        RfsvParams(alpha=-1.0)
    with pytest.raises(ValueError):
        FsabrParams(rho=1.5)
    with pytest.raises(ValueError):
        FsabrParams(alpha0=0.0)
    with pytest.raises(ValueError):
        FsabrParams(H=1.0)


@given(st.floats(-1.0, 1.0))
def test_rho_bar(rho):
    p = FsabrParams(rho=rho)
    assert p.rho**2 + p.rho_bar**2 == pytest.approx(1.0, abs=1e-15)
    assert p.Y0 == p.alpha0


def test_rfsv_defaults_are_grid_relative():
    g = TimeGrid(2.0, 4000)
    p = RfsvParams.default_for(g, x0=-1.0)
    assert p.alpha * g.dt == pytest.approx(5e-4)
    assert p.m == -1.0 and p.nu == 0.3 and p.H == 0.14


# ---------------------------------------------------------------- RFSV


def test_rfsv_alpha_zero_telescopes():
    g = TimeGrid(1.0, 100)
    fb = davies_harte(g, 0.2, PseudoSource(1))
    p = RfsvParams(H=0.2, nu=0.7, alpha=0.0, x0=0.4, sigma0=2.0)
    mp = simulate_rfsv(p, g, fb)
    assert np.array_equal(mp.X, 0.4 + 0.7 * fb.values)
    assert np.array_equal(mp.Y, 2.0 * np.exp(mp.X))


def test_rfsv_alpha_zero_matches_euler():
    g = TimeGrid(1.0, 50)
    W = sampler("davies-harte", g, 0.3).sample(PseudoSource(2), 3)
    p = RfsvParams(H=0.3, nu=0.4, alpha=0.0, x0=0.1)
    X = simulate_rfsv(p, g, W).X
    ref = np.empty_like(W)
    ref[:, 0] = 0.1
    for k in range(50):
        ref[:, k + 1] = ref[:, k] + 0.4 * (W[:, k + 1] - W[:, k])
    assert np.allclose(X, ref, atol=1e-13)


def test_rfsv_euler_recursion():
    g = TimeGrid(1.0, 40)
    W = sampler("davies-harte", g, 0.2).sample(PseudoSource(3), 2)
    p = RfsvParams(H=0.2, nu=0.5, alpha=3.0, m=-0.5, x0=0.2)
    X = simulate_rfsv(p, g, W).X
    ref = np.empty_like(W)
    ref[:, 0] = 0.2
    for k in range(40):
        ref[:, k + 1] = ref[:, k] + 0.5 * (W[:, k + 1] - W[:, k]) - 3.0 * (ref[:, k] + 0.5) * g.dt
    assert np.allclose(X, ref, atol=1e-13)


def test_rfsv_fixed_point():
    g = TimeGrid(1.0, 200)
    fb = davies_harte(g, 0.14, PseudoSource(4))
    p = RfsvParams(H=0.14, nu=0.0, alpha=2.0, m=0.3, x0=0.3, sigma0=1.5)
    mp = simulate_rfsv(p, g, fb)
    assert np.allclose(mp.X, 0.3, atol=1e-14, rtol=0)
    assert np.allclose(mp.Y, 1.5 * math.exp(0.3), rtol=1e-14)


def test_rfsv_lognormal_mean():
    g = TimeGrid(1.0, 16)
    N, H, nu = 10**5, 0.2, 0.8
    W = sampler("davies-harte", g, H).sample(PseudoSource(5), N)
    Y = simulate_rfsv(RfsvParams(H=H, nu=nu, sigma0=1.0), g, W).Y
    target = np.exp(0.5 * nu**2 * g.times ** (2 * H))
    se = Y.std(axis=0, ddof=1) / math.sqrt(N)
    se[0] = 1.0
    assert np.all(np.abs(Y.mean(axis=0) - target) <= 3 * se)


def test_rfsv_mean_reversion():
    g = TimeGrid(1.0, 1000)
    N = 4000
    W = sampler("davies-harte", g, 0.3).sample(PseudoSource(6), N)
    p = RfsvParams(H=0.3, nu=0.5, alpha=50.0, m=-1.0, x0=1.0)
    XT = simulate_rfsv(p, g, W).X[:, -1]
    assert abs(XT.mean() - (-1.0)) <= 3 * XT.std(ddof=1) / math.sqrt(N)


def test_rfsv_stationary_start():
    g = TimeGrid(1.0, 10)
    W = np.zeros((20000, 11))
    p = RfsvParams(H=0.3, nu=0.5, alpha=4.0, m=0.2)
    X0 = simulate_rfsv(p, g, W, stationary_start=True, source=PseudoSource(7)).X[:, 0]
    v = fou_stationary_variance(0.5, 4.0, 0.3)
    assert abs(X0.mean() - 0.2) <= 3 * math.sqrt(v / X0.size)
    assert abs(X0.var(ddof=1) - v) <= 3 * v * math.sqrt(2 / X0.size)
    with pytest.raises(ValueError):
        simulate_rfsv(p, g, W, stationary_start=True)
    with pytest.raises(ValueError):
        fou_stationary_variance(0.5, 0.0, 0.3)


def test_rfsv_grid_mismatch():
    g = TimeGrid(1.0, 20)
    fb = davies_harte(TimeGrid(1.0, 21), 0.2, PseudoSource(1))
    with pytest.raises(GridMismatch):
        simulate_rfsv(RfsvParams(H=0.2), g, fb)
    with pytest.raises(GridMismatch):
        simulate_rfsv(RfsvParams(H=0.3), TimeGrid(1.0, 21), fb)
    with pytest.raises(GridMismatch):
        simulate_rfsv(RfsvParams(H=0.2), g, np.zeros(20))


@given(st.floats(0.05, 0.95), st.floats(0.0, 3.0), st.floats(0.0, 100.0), st.integers(0, 10**6))
def test_rfsv_positive(H, nu, alpha, seed):
    g = TimeGrid(1.0, 64)
    W = sampler("davies-harte", g, H).sample(PseudoSource(seed), 2)
    Y = simulate_rfsv(RfsvParams(H=H, nu=nu, alpha=alpha, sigma0=0.2), g, W).Y
    assert np.all(Y > 0)


# ---------------------------------------------------------------- fSABR


def test_fsabr_nu_zero_martingale():
    g = TimeGrid(0.5, 50)
    p = FsabrParams(S0=1.0, alpha0=0.3, nu=0.0, rho=-0.5, H=0.1)
    mp = simulate_fsabr(p, g, PseudoSource(8), K=1.1, n_paths=10**5)
    assert np.all(mp.Y == 0.3)
    assert np.all(mp.X[:, 0] == math.log(1 / 1.1))
    e = np.exp(mp.X[:, -1])
    assert abs(e.mean() - 1 / 1.1) <= 3 * e.std(ddof=1) / math.sqrt(e.size)


def test_fsabr_rho_zero_orthogonal():
    g = TimeGrid(0.5, 20)
    p = FsabrParams(alpha0=0.3, nu=1.0, rho=0.0, H=0.2)
    N = 10**5
    mp = simulate_fsabr(p, g, PseudoSource(9), n_paths=N)
    innov = np.diff(mp.X, axis=1) + 0.5 * mp.Y[:, :-1] ** 2 * g.dt
    r = np.array([np.corrcoef(mp.dB[:, k], innov[:, k])[0, 1] for k in range(20)])
    assert np.all(np.abs(r) <= 3 / math.sqrt(N))


def test_fsabr_rho_sets_correlation():
    g = TimeGrid(0.5, 10)
    p = FsabrParams(alpha0=0.3, nu=0.0, rho=-0.7, H=0.3)
    N = 10**5
    mp = simulate_fsabr(p, g, PseudoSource(10), n_paths=N)
    innov = np.diff(mp.X, axis=1) + 0.5 * mp.Y[:, :-1] ** 2 * g.dt
    r = np.corrcoef(mp.dB[:, 0], innov[:, 0])[0, 1]
    assert abs(r + 0.7) <= 3 * (1 - 0.49) / math.sqrt(N)


def test_fsabr_brownian_volatility():
    g = TimeGrid(1.0, 64)
    p = FsabrParams(alpha0=0.2, nu=0.8, rho=0.3, H=0.5)
    mp = simulate_fsabr(p, g, PseudoSource(11), n_paths=500)
    B = np.cumsum(mp.dB, axis=1)
    assert np.array_equal(mp.fbm[:, 1:], B)
    assert np.allclose(mp.Y[:, 1:], 0.2 * np.exp(0.8 * B), rtol=1e-14)
    assert np.corrcoef(np.log(mp.Y[:, -1]), B[:, -1])[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_fsabr_driver_identity():
    g = TimeGrid(0.5, 30)
    p = FsabrParams(alpha0=0.3, nu=1.2, rho=-0.5, H=0.1)
    mp = simulate_fsabr(p, g, PseudoSource(12))
    assert mp.dB is mp.fbm.driving_increments
    Yk = mp.Y[:-1]
    X = np.concatenate([[0.0], np.cumsum(Yk * (p.rho * mp.dB + p.rho_bar * mp.dW)
                                         - 0.5 * Yk**2 * g.dt)])
    assert np.array_equal(mp.X, X)
    assert np.array_equal(mp.Y, p.alpha0 * np.exp(p.nu * mp.fbm.values))


def test_fsabr_normal_layout():
    g = TimeGrid(1.0, 8)
    p = FsabrParams(alpha0=0.3, nu=0.5, rho=0.2, H=0.3)
    z = PseudoSource(13).normals(3 * 16).reshape(3, 16)
    X, Y, BH, dB, dW = fsabr_from_normals(p, g, z)
    assert np.array_equal(dB, z[:, :8] * math.sqrt(g.dt))
    assert np.array_equal(dW, z[:, 8:] * math.sqrt(g.dt))
    batch = simulate_fsabr(p, g, PseudoSource(13), n_paths=3)
    assert np.array_equal(batch.X, X)
    one = batch.path(1)
    assert np.array_equal(one.X, X[1]) and np.array_equal(one.dW, dW[1])
    with pytest.raises(ValueError):
        fsabr_from_normals(p, g, z[:, :15])


def test_fsabr_black_scholes_reduction():
    g = TimeGrid(0.5, 20)
    a0 = 0.3
    p = FsabrParams(S0=1.0, alpha0=a0, nu=0.0, rho=0.4, H=0.5)
    XT = simulate_fsabr(p, g, PseudoSource(14), K=0.9, n_paths=10**5).X[:, -1]
    mu = math.log(1 / 0.9) - 0.5 * a0**2 * 0.5
    assert stats.kstest(XT, "norm", args=(mu, a0 * math.sqrt(0.5))).pvalue > 0.01


def test_fsabr_exhausted_leaves_source_untouched():
    g = TimeGrid(1.0, 10)
    src = EntropySource.from_words(PseudoSource(1).words(2 * 10 * 5 - 2))
    with pytest.raises(Exhausted):
        simulate_fsabr(FsabrParams(), g, src, n_paths=5)
    assert src.words_remaining == 98


def test_fsabr_guards():
    with pytest.raises(ValueError):
        simulate_fsabr(FsabrParams(), TimeGrid(1.0, 1), PseudoSource(1))
    with pytest.raises(ValueError):
        simulate_fsabr(FsabrParams(), TimeGrid(1.0, 4), PseudoSource(1), K=0.0)


@given(st.floats(0.05, 0.95), st.floats(0.0, 4.0), st.floats(-1.0, 1.0), st.integers(0, 10**6))
def test_fsabr_positive_volatility(H, nu, rho, seed):
    g = TimeGrid(1.0, 16)
    mp = simulate_fsabr(FsabrParams(alpha0=0.3, nu=nu, rho=rho, H=H), g, PseudoSource(seed),
                        n_paths=4)
    assert np.all(mp.Y > 0) and np.all(np.isfinite(mp.X))


# ---------------------------------------------------------------- full circle


def test_full_circle_brownian_control():
    g = TimeGrid(1.0, 5000)
    res = rfsv_full_circle(RfsvParams.default_for(g, H=0.5), g, PseudoSource(15))
    for est in res.estimates():
        assert abs(est.H_hat - 0.5) <= 0.05, est.method


def test_full_circle_reduction_to_fbm():
    g = TimeGrid(1.0, 3000)
    p = RfsvParams(H=0.3, nu=1.0, alpha=0.0, sigma0=1.0)
    res = rfsv_full_circle(p, g, PseudoSource(16))
    fb = res.path.fbm
    assert np.array_equal(res.path.X, fb.values)
    assert np.allclose(np.log(res.path.Y), fb.values, rtol=0, atol=1e-14)
    from fracmc.hurst import hurst_scaling
    assert res.scaling.H_hat == pytest.approx(hurst_scaling(fb.values)[0].H_hat, abs=1e-10)


def test_full_circle_needs_long_grid():
    with pytest.raises(ValueError):
        rfsv_full_circle(RfsvParams(), TimeGrid(1.0, 1999), PseudoSource(1))
