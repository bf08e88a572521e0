"""Tracker arithmetic: Jacobian, predict/update steps, adaptation, full runs."""

from __future__ import annotations

import collections
import math

import numpy as np
import pytest
import scipy.stats

from spintrack.core import NoiseConfig, PhysicsParams, StateVector
from spintrack.errors import InvalidParameter, NumericalFailure
from spintrack.fields import ConstantField, RandomWalkField
from spintrack.filtering import (
    FilterConfig,
    FilterOutput,
    adapt_r,
    ekf_predict,
    ekf_update,
    jacobian_f,
    run_filter,
    write_filter_csv,
)
from spintrack.simulate import simulate_trace

TWO_PI = 2.0 * math.pi


def _physics(dt=5e-5, gamma=TWO_PI * 300.0, g_d=1.0, q_x=1.0, q_z=1.0):
    return PhysicsParams(gamma_relax=gamma, g_d=g_d, q_x=q_x, q_z=q_z, dt=dt)


def _config(physics, noise, mode="aekf", omega0=TWO_PI * 2000.0,
            p_omega=(TWO_PI * 1000.0) ** 2, convention="standard"):
    return FilterConfig(
        mode=mode, physics=physics, noise=noise,
        init_state=StateVector(0.0, 0.0, omega0),
        init_cov=np.diag([physics.q_x, physics.q_z, p_omega]),
        adapt_convention=convention)


# ------------------------------------------------------------------ jacobian

def test_jacobian_matches_finite_differences():
    p = _physics()
    gen = np.random.default_rng(101)
    for _ in range(10):
        x = StateVector(gen.normal(), gen.normal(),
                        gen.uniform(TWO_PI * 500.0, TWO_PI * 5000.0))
        jac = jacobian_f(x, p)
        fd = np.empty((3, 3))
        for j in range(3):
            h = 1e-6 * max(1.0, abs(x.as_array()[j]))
            hi, lo = x.as_array(), x.as_array()
            hi[j] += h
            lo[j] -= h
            fhi = _propagate_array(hi, p)
            flo = _propagate_array(lo, p)
            fd[:, j] = (fhi - flo) / (2.0 * h)
        assert np.abs(jac - fd).max() / np.abs(jac).max() < 1e-6


def _propagate_array(arr, p):
    from spintrack.simulate import propagate_mean
    out = propagate_mean(StateVector(*arr), p)
    return out.as_array()


def test_jacobian_structure():
    p = _physics()
    jac = jacobian_f(StateVector(1.0, 2.0, 0.0), p)
    d = math.exp(-p.gamma_relax * p.dt)
    # omega = 0: the spin block is a pure decay, the frequency column couples
    # through -dt*j_z (top) and +dt*j_x (bottom), and omega maps to itself.
    assert np.allclose(jac[0], [d, 0.0, -d * p.dt * 2.0], rtol=1e-14)
    assert np.allclose(jac[1], [0.0, d, d * p.dt * 1.0], rtol=1e-14)
    assert np.array_equal(jac[2], [0.0, 0.0, 1.0])


# ------------------------------------------------------------------- predict

def test_predict_against_hand_built_matrices():
    dt = 0.01
    p = PhysicsParams(gamma_relax=math.log(2.0) / dt, g_d=1.0, q_x=2.0, q_z=3.0,
                      dt=dt)
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.25)
    cfg = FilterConfig(mode="ekf", physics=p, noise=noise,
                       init_state=StateVector(0.0, 0.0, 0.0), init_cov=np.eye(3))
    x = StateVector(1.0, 2.0, 0.0)
    p0 = np.eye(3)
    x_minus, p_minus = ekf_predict(x, p0, cfg)

    # Written out from scratch: decay 1/2, no rotation, so the mean halves
    # and the transition matrix is known entry by entry.
    f = np.array([[0.5, 0.0, 0.5 * dt * (-2.0)],
                  [0.0, 0.5, 0.5 * dt * (1.0)],
                  [0.0, 0.0, 1.0]])
    qs = 1.0 - math.exp(-2.0 * math.log(2.0))  # = 0.75
    q = np.diag([qs * 2.0, qs * 3.0, 0.25])
    expected = f @ p0 @ f.T + q
    assert x_minus.j_x == pytest.approx(0.5, rel=1e-14)
    assert x_minus.j_z == pytest.approx(1.0, rel=1e-14)
    assert x_minus.omega == 0.0
    np.testing.assert_allclose(p_minus, expected, rtol=1e-13)


def test_predict_frequency_variance_grows_by_alpha():
    cfg = _config(_physics(), NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.7))
    _, p_minus = ekf_predict(StateVector(0.1, -0.2, 5000.0), np.eye(3), cfg)
    # third row of the transition is (0, 0, 1), so P22' = P22 + alpha exactly
    assert p_minus[2, 2] == pytest.approx(1.7, rel=1e-14)
    assert np.array_equal(p_minus, p_minus.T)


# -------------------------------------------------------------------- update

def test_update_hand_case_diagonal():
    x, p, v = ekf_update(StateVector(0.0, 0.0, 100.0), np.eye(3),
                         y=1.0, g_d=1.0, r=1.0)
    assert v == 1.0
    assert (x.j_x, x.j_z, x.omega) == (0.5, 0.0, 100.0)
    np.testing.assert_allclose(p, np.diag([0.5, 1.0, 1.0]), atol=1e-15)


def test_update_hand_case_correlated():
    p_minus = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.0], [0.2, 0.0, 1.0]])
    x, p, v = ekf_update(StateVector(0.0, 0.0, 100.0), p_minus,
                         y=2.0, g_d=1.0, r=1.0)
    k = p_minus[:, 0] / 2.0  # gain spelled out: P e1 / (P11 + r)
    assert v == 2.0
    assert x.j_x == pytest.approx(2.0 * k[0], rel=1e-14)
    assert x.j_z == pytest.approx(2.0 * k[1], rel=1e-14)
    assert x.omega == pytest.approx(100.0 + 2.0 * k[2], rel=1e-14)
    a = np.eye(3)
    a[:, 0] -= k
    expected = a @ p_minus @ a.T + np.outer(k, k)
    np.testing.assert_allclose(p, expected, rtol=1e-13)


def test_update_gain_scales_with_detector_sign():
    # An inverting detector (g_d < 0) flips the gain but produces the same
    # posterior variance.
    _, p_pos, _ = ekf_update(StateVector(0.0, 0.0, 0.0), np.eye(3), 1.0, 2.0, 1.0)
    x_neg, p_neg, _ = ekf_update(StateVector(0.0, 0.0, 0.0), np.eye(3), 1.0, -2.0, 1.0)
    np.testing.assert_allclose(p_pos, p_neg, rtol=1e-14)
    assert x_neg.j_x == pytest.approx(-0.4, rel=1e-14)  # K = -2/5, v = 1


def test_update_rejects_nonpositive_innovation_variance():
    with pytest.raises(NumericalFailure):
        ekf_update(StateVector(0.0, 0.0, 0.0), np.eye(3), 1.0, 1.0, -2.0)


def test_update_keeps_covariance_psd_under_mismatch():
    p_minus = np.diag([1e6, 1e-6, 1e8])
    _, p, _ = ekf_update(StateVector(0.0, 0.0, 0.0), p_minus, 5.0, 1.0, 1e-9)
    assert np.linalg.eigvalsh(p)[0] >= -1e-9


# ---------------------------------------------------------------- adaptation

def test_adapt_r_window_arithmetic():
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    # mean(v^2) = 2.5, mean(hph) = 0.5 -> estimate 2.0
    est = adapt_r([1.0, -1.0, 2.0, -2.0], [0.5] * 4, noise)
    assert est == pytest.approx(2.0, rel=1e-15)


def test_adapt_r_flipped_convention_and_fallback():
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    est = adapt_r([1.0, -1.0, 2.0, -2.0], [0.5] * 4, noise,
                  previous=7.0, convention="flipped")
    assert est == 7.0  # -2.0 is below the floor: keep the previous estimate
    est = adapt_r([1.0, -1.0, 2.0, -2.0], [0.5] * 4, noise,
                  previous=None, convention="flipped")
    assert est == noise.r_floor


def test_adapt_r_validation():
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    with pytest.raises(InvalidParameter):
        adapt_r([1.0], [0.5], noise)
    with pytest.raises(InvalidParameter):
        adapt_r([1.0, 2.0], [0.5], noise)
    with pytest.raises(InvalidParameter):
        adapt_r([1.0, 2.0], [0.5, 0.5], noise, convention="reversed")


def test_adapt_r_statistical_consistency():
    # White innovations with variance 3 and unit predicted power: the
    # estimate must land inside the 99% chi-square band around 3 - 1 = 2.
    n = 10_000
    v = np.random.default_rng(55).normal(0.0, math.sqrt(3.0), n)
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    est = adapt_r(v, np.ones(n), noise)
    lo, hi = scipy.stats.chi2.ppf([0.005, 0.995], df=n) / n * 3.0 - 1.0
    assert lo < est < hi


# ------------------------------------------------- full runs: consistency

def _replicate_run(trace, cfg):
    """Pure-Python re-execution of the per-sample loop from the public ops."""
    n = trace.y.size
    win = cfg.noise.adapt_window
    vwin = collections.deque(maxlen=win)
    hwin = collections.deque(maxlen=win)
    x = cfg.init_state
    p = cfg.init_cov.copy()
    prev_r = cfg.noise.r_init
    rows = np.empty((n, 3))
    p_diag = np.empty((n, 3))
    innov = np.empty(n)
    r_used = np.empty(n)
    for k in range(n):
        x, p = ekf_predict(x, p, cfg)
        v = trace.y[k] - cfg.physics.g_d * x.j_x
        hph = cfg.physics.g_d ** 2 * p[0, 0]
        if cfg.mode == "aekf":
            vwin.append(v)
            hwin.append(hph)
            if len(vwin) >= 2:
                r = adapt_r(vwin, hwin, cfg.noise, previous=prev_r,
                            convention=cfg.adapt_convention)
            else:
                r = prev_r
            prev_r = r
        else:
            r = cfg.noise.r_init
        x, p, v = ekf_update(x, p, trace.y[k], cfg.physics.g_d, r)
        rows[k] = x.as_array()
        p_diag[k] = np.diag(p)
        innov[k] = v
        r_used[k] = r
    return rows, p_diag, innov, r_used


@pytest.mark.parametrize("mode,convention", [("aekf", "standard"),
                                             ("aekf", "flipped"),
                                             ("ekf", "standard")])
def test_run_filter_matches_modular_composition(mode, convention):
    p = _physics(dt=1e-4, gamma=800.0, g_d=1.4, q_x=0.9, q_z=1.1)
    noise = NoiseConfig(r_true=1.0, r_init=2.0, alpha=0.05, adapt_window=16)
    trace = simulate_trace(p, noise, RandomWalkField(3000.0, 0.2), 300, seed=13)
    cfg = _config(p, noise, mode=mode, omega0=3000.0, p_omega=100.0,
                  convention=convention)
    out = run_filter(trace, cfg)
    rows, p_diag, innov, r_used = _replicate_run(trace, cfg)
    np.testing.assert_allclose(out.x_hat, rows, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(out.p_diag, p_diag, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(out.innovation, innov, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(out.r_hat, r_used, rtol=1e-10)


def test_first_update_uses_initial_r_then_adapts():
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=100.0, alpha=0.1)
    trace = simulate_trace(p, noise, ConstantField(TWO_PI * 2000.0), 1200, seed=17)
    out = run_filter(trace, _config(p, noise))
    assert out.r_hat[0] == 100.0
    assert out.r_hat[1] != 100.0  # adaptation live from the second sample
    # After two window lengths the estimate should sit near the true value.
    assert out.r_hat[2 * noise.adapt_window] == pytest.approx(1.0, abs=2.0)


def test_flipped_convention_stays_at_init_on_matched_data():
    # On data whose innovation power exceeds the predicted power, the flipped
    # estimator is always negative, so the fallback keeps r at its initial
    # value for the whole run.
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=3.0, alpha=0.1)
    trace = simulate_trace(p, noise, ConstantField(TWO_PI * 2000.0), 500, seed=23)
    out = run_filter(trace, _config(p, noise, convention="flipped"))
    assert np.all(out.r_hat == 3.0)


# -------------------------------------------- full runs: reference filters

def _linear_kf(y, omega, p_phys, r):
    """Independent two-state Kalman filter for a known rotation rate."""
    dt, g = p_phys.dt, p_phys.g_d
    d = math.exp(-p_phys.gamma_relax * dt)
    c, s = math.cos(omega * dt), math.sin(omega * dt)
    f = d * np.array([[c, -s], [s, c]])
    qs = -math.expm1(-2.0 * p_phys.gamma_relax * dt)
    q = np.diag([qs * p_phys.q_x, qs * p_phys.q_z])
    h = np.array([g, 0.0])
    x = np.zeros(2)
    p = np.diag([p_phys.q_x, p_phys.q_z])
    xs = np.empty((y.size, 2))
    ps = np.empty((y.size, 2))
    for k in range(y.size):
        x = f @ x
        p = f @ p @ f.T + q
        s_k = h @ p @ h + r
        gain = p @ h / s_k
        x = x + gain * (y[k] - h @ x)
        a = np.eye(2) - np.outer(gain, h)
        p = a @ p @ a.T + r * np.outer(gain, gain)
        xs[k] = x
        ps[k] = np.diag(p)
    return xs, ps


def test_frozen_frequency_reduces_to_linear_kalman_filter():
    # alpha = 0 with an exact frequency prior of zero variance: the augmented
    # tracker must reproduce a textbook linear filter on the spin pair.
    p = _physics(dt=1e-4, gamma=900.0, q_x=0.8, q_z=1.2)
    omega = 4000.0
    noise = NoiseConfig(r_true=0.7, r_init=0.7, alpha=0.0)
    trace = simulate_trace(p, noise, ConstantField(omega), 2000, seed=29)
    cfg = FilterConfig(mode="ekf", physics=p, noise=noise,
                       init_state=StateVector(0.0, 0.0, omega),
                       init_cov=np.diag([p.q_x, p.q_z, 0.0]))
    out = run_filter(trace, cfg)
    xs, ps = _linear_kf(trace.y, omega, p, 0.7)
    np.testing.assert_allclose(out.x_hat[:, :2], xs, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(out.p_diag[:, :2], ps, rtol=1e-10)
    assert np.all(out.x_hat[:, 2] == omega)
    assert np.all(out.p_diag[:, 2] == 0.0)


def test_spin_variance_reaches_riccati_fixed_point():
    p = _physics(dt=1e-4, gamma=900.0, q_x=0.8, q_z=1.2)
    omega, r = 4000.0, 0.7
    noise = NoiseConfig(r_true=r, r_init=r, alpha=0.0)
    trace = simulate_trace(p, noise, ConstantField(omega), 2000, seed=31)
    cfg = FilterConfig(mode="ekf", physics=p, noise=noise,
                       init_state=StateVector(0.0, 0.0, omega),
                       init_cov=np.diag([p.q_x, p.q_z, 0.0]))
    out = run_filter(trace, cfg)

    # Iterate the posterior covariance recursion (no data involved) to its
    # fixed point and compare the filter's terminal variance against it.
    d = math.exp(-p.gamma_relax * p.dt)
    c, s = math.cos(omega * p.dt), math.sin(omega * p.dt)
    f = d * np.array([[c, -s], [s, c]])
    qs = -math.expm1(-2.0 * p.gamma_relax * p.dt)
    q = np.diag([qs * p.q_x, qs * p.q_z])
    h = np.array([p.g_d, 0.0])
    cov = np.diag([p.q_x, p.q_z])
    for _ in range(5000):
        cov = f @ cov @ f.T + q
        gain = cov @ h / (h @ cov @ h + r)
        cov = cov - np.outer(gain, h @ cov)
    assert out.p_diag[-1, 0] == pytest.approx(cov[0, 0], rel=1e-8)
    assert out.p_diag[-1, 1] == pytest.approx(cov[1, 1], rel=1e-8)


# ------------------------------------------- full runs: statistical checks

def test_innovation_whiteness_when_matched():
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.01)
    trace = simulate_trace(p, noise, ConstantField(TWO_PI * 2000.0), 20_000, seed=37)
    out = run_filter(trace, _config(p, noise, mode="ekf"))
    v = out.innovation[2000:]
    v = v - v.mean()
    rho1 = float(np.dot(v[1:], v[:-1]) / np.dot(v, v))
    assert abs(rho1) < 4.0 / math.sqrt(v.size)


def test_frequency_error_consistent_with_reported_variance():
    # Normalized squared frequency error over a few trials: order unity if
    # the reported P is honest (tight two-sided bounds live in the
    # acceptance battery).
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    ratios = []
    for seed in range(5):
        trace = simulate_trace(p, noise, RandomWalkField(TWO_PI * 2000.0, 0.1),
                               10_000, seed=seed)
        out = run_filter(trace, _config(p, noise))
        sl = slice(2000, None)
        err2 = (trace.omega_true[sl] - out.omega_hat[sl]) ** 2
        ratios.append(float(np.mean(err2 / out.p_omega[sl])))
    assert 0.3 < np.mean(ratios) < 3.0


def test_adaptive_run_insensitive_to_initial_r():
    # Steady-state tracking quality must not depend on the configured r once
    # adaptation has converged (ratio within 10%).
    p = _physics()
    mse = {}
    for r_init in (0.01, 1000.0):
        acc = []
        for seed in (3, 4, 5):
            noise = NoiseConfig(r_true=1.0, r_init=r_init, alpha=0.1)
            trace = simulate_trace(p, noise, RandomWalkField(TWO_PI * 2000.0, 0.1),
                                   40_000, seed=seed)
            out = run_filter(trace, _config(p, noise))
            sl = slice(20_000, None)
            acc.append(np.mean((trace.omega_true[sl] - out.omega_hat[sl]) ** 2))
        mse[r_init] = np.mean(acc)
    ratio = mse[0.01] / mse[1000.0]
    assert 1.0 / 1.1 < ratio < 1.1


# ----------------------------------------------------- edge cases and I/O

def test_single_sample_run():
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    trace = simulate_trace(p, noise, ConstantField(1000.0), 1, seed=0)
    out = run_filter(trace, _config(p, noise, omega0=1000.0))
    assert out.x_hat.shape == (1, 3)
    assert out.r_hat[0] == 1.0
    assert out.t.shape == (1,)


def test_run_filter_rejects_rate_mismatch():
    p = _physics(dt=5e-5)
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    trace = simulate_trace(_physics(dt=1e-4), noise, ConstantField(1000.0), 10, seed=0)
    with pytest.raises(InvalidParameter):
        run_filter(trace, _config(p, noise))


def test_filter_config_validation():
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    with pytest.raises(InvalidParameter):
        FilterConfig(mode="ukf", physics=p, noise=noise,
                     init_state=StateVector(0, 0, 0), init_cov=np.eye(3))
    with pytest.raises(InvalidParameter):
        FilterConfig(mode="ekf", physics=p, noise=noise,
                     init_state=StateVector(0, 0, 0), init_cov=np.eye(3),
                     adapt_convention="reversed")


def test_filter_config_symmetrizes_covariance():
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    raw = np.array([[1.0, 0.4, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 1.0]])
    cfg = FilterConfig(mode="ekf", physics=p, noise=noise,
                       init_state=StateVector(0, 0, 0), init_cov=raw)
    assert np.array_equal(cfg.init_cov, cfg.init_cov.T)
    assert cfg.init_cov[0, 1] == pytest.approx(0.3, rel=1e-15)


def test_write_filter_csv(tmp_path):
    p = _physics()
    noise = NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)
    trace = simulate_trace(p, noise, ConstantField(1000.0), 5, seed=1)
    out = run_filter(trace, _config(p, noise, omega0=1000.0))
    path = write_filter_csv(out, trace, tmp_path / "filter.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,omega_true_rad_s,omega_hat_rad_s,p_omega,innovation_V,r_hat_V2"
    assert len(lines) == 6
    cells = lines[1].split(",")
    assert float(cells[2]) == out.omega_hat[0]

    trace.omega_true = None
    path2 = write_filter_csv(out, trace, tmp_path / "no_truth.csv")
    assert path2.read_text().splitlines()[1].split(",")[1] == ""
