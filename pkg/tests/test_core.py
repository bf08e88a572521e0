"""Value-type validation and covariance hygiene."""

from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from spintrack.core import (
    DEFAULT_GYRO,
    NoiseConfig,
    PhysicsParams,
    StateVector,
    validate_covariance,
)
from spintrack.errors import InvalidCovariance, InvalidParameter


# ---------------------------------------------------------------- StateVector

def test_state_vector_round_trip():
    s = StateVector(1.5, -2.25, 12566.370614359172)
    arr = s.as_array()
    assert arr.dtype == np.float64
    assert StateVector.from_array(arr) == s


def test_state_vector_rejects_non_finite():
    with pytest.raises(InvalidParameter):
        StateVector(math.nan, 0.0, 1.0)
    with pytest.raises(InvalidParameter):
        StateVector(0.0, math.inf, 1.0)


def test_state_vector_from_array_shape_check():
    with pytest.raises(InvalidParameter):
        StateVector.from_array([1.0, 2.0])


# -------------------------------------------------------------- PhysicsParams

def test_physics_params_sampling_rate():
    p = PhysicsParams(gamma_relax=100.0, g_d=1.0, q_x=1.0, q_z=1.0, dt=5e-5)
    assert p.fs == pytest.approx(20_000.0, rel=1e-15)
    assert p.gyro == DEFAULT_GYRO


@pytest.mark.parametrize(
    "kwargs",
    [
        {"gamma_relax": 0.0},
        {"gamma_relax": -1.0},
        {"gamma_relax": math.nan},
        {"dt": 0.0},
        {"dt": -1e-5},
        {"q_x": -0.1},
        {"q_z": -0.1},
        {"g_d": math.inf},
        {"gyro": 0.0},
    ],
)
def test_physics_params_rejects_bad_values(kwargs):
    base = dict(gamma_relax=100.0, g_d=1.0, q_x=1.0, q_z=1.0, dt=5e-5)
    base.update(kwargs)
    with pytest.raises(InvalidParameter):
        PhysicsParams(**base)


def test_physics_params_allows_degenerate_spin_variance():
    # q = 0 is a legal (deterministic-spin) limit, and g_d may be negative
    # for an inverting detector chain.
    p = PhysicsParams(gamma_relax=100.0, g_d=-2.0, q_x=0.0, q_z=0.0, dt=5e-5)
    assert p.q_x == 0.0 and p.g_d == -2.0


# ---------------------------------------------------------------- NoiseConfig

def test_noise_config_defaults():
    n = NoiseConfig(r_true=1.0, r_init=2.0, alpha=0.1)
    assert n.adapt_window == 200
    assert n.r_floor == 1e-9


@pytest.mark.parametrize(
    "kwargs",
    [
        {"r_true": 0.0},
        {"r_true": -1.0},
        {"r_init": 0.0},
        {"alpha": -1e-9},
        {"adapt_window": 1},
        {"adapt_window": 2.5},
        {"r_floor": 0.0},
    ],
)
def test_noise_config_rejects_bad_values(kwargs):
    base = dict(r_true=1.0, r_init=1.0, alpha=0.1)
    base.update(kwargs)
    with pytest.raises(InvalidParameter):
        NoiseConfig(**base)


def test_noise_config_alpha_zero_allowed():
    # alpha = 0 freezes the frequency channel (non-adaptive tracking limit).
    assert NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.0).alpha == 0.0


# -------------------------------------------------------- validate_covariance

def test_valid_covariance_passes_through_bitwise():
    p = np.diag([1.0, 2.0, 3.0])
    out = validate_covariance(p)
    assert np.array_equal(out, p)
    # Idempotent: a second pass changes nothing.
    assert np.array_equal(validate_covariance(out), out)


def test_asymmetric_input_is_symmetrized():
    p = np.array([[2.0, 0.4, 0.0], [0.2, 2.0, 0.0], [0.0, 0.0, 1.0]])
    out = validate_covariance(p)
    assert np.array_equal(out, 0.5 * (p + p.T))


def test_indefinite_diagonal_is_clamped_exactly():
    out = validate_covariance(np.diag([1.0, -2.0, 3.0]))
    assert np.allclose(out, np.diag([1.0, 0.0, 3.0]), atol=1e-15)


def test_negative_definite_collapses_to_zero():
    out = validate_covariance(-np.eye(3))
    assert np.allclose(out, np.zeros((3, 3)), atol=1e-15)


def test_rank_deficient_clamp_hand_case():
    # [[0, 1], [1, 0]] has eigenvalues +/-1; clamping the negative one leaves
    # the rank-one projector onto (1, 1)/sqrt(2).
    out = validate_covariance(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(out, np.full((2, 2), 0.5), atol=1e-14)


def test_clamp_matches_independent_eigendecomposition():
    gen = np.random.default_rng(7)
    for _ in range(50):
        a = gen.normal(size=(3, 3))
        p = 0.5 * (a + a.T)  # symmetric, generally indefinite
        out = validate_covariance(p)
        w, v = scipy.linalg.eigh(p)
        expected = (v * np.clip(w, 0.0, None)) @ v.T
        assert np.allclose(out, 0.5 * (expected + expected.T), atol=1e-12)


def test_clamped_output_is_psd_and_idempotent():
    gen = np.random.default_rng(99)
    for _ in range(200):
        a = gen.normal(size=(3, 3)) * 10.0 ** gen.integers(-3, 4)
        out = validate_covariance(a)
        assert np.array_equal(out, out.T)
        scale = max(np.abs(out).max(), 1.0)
        assert np.linalg.eigvalsh(out)[0] >= -1e-13 * scale
        assert np.array_equal(validate_covariance(out), out)


@pytest.mark.parametrize(
    "bad",
    [
        np.zeros((2, 3)),
        np.zeros(3),
        np.array([[1.0, 0.0], [0.0, math.nan]]),
        np.array([[math.inf]]),
    ],
)
def test_covariance_rejects_malformed(bad):
    with pytest.raises(InvalidCovariance):
        validate_covariance(bad)
