import math

import numpy as np
import pytest

from spintrack.core import NoiseConfig, PhysicsParams

TWO_PI = 2.0 * math.pi


@pytest.fixture
def desk_physics() -> PhysicsParams:
    """Quick-run parameter set: 20 kSa/s, 300 Hz linewidth."""
    return PhysicsParams(gamma_relax=TWO_PI * 300.0, g_d=1.0, q_x=1.0, q_z=1.0,
                         dt=1.0 / 20_000.0)


@pytest.fixture
def default_noise() -> NoiseConfig:
    return NoiseConfig(r_true=1.0, r_init=1.0, alpha=0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
