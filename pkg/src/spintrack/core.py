"""Core value types for the tracking model.

The augmented state is ``[j_x, j_z, omega]``: the two transverse collective
spin components (dimensionless spin units) plus the Larmor angular frequency
(rad/s) carried as a slowly varying parameter.  Covariances over that state
are plain ``(3, 3)`` float arrays; :func:`validate_covariance` is the single
hygiene point that symmetrizes and clamps them back onto the PSD cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCovariance, InvalidParameter

# Default gyromagnetic ratio, rad s^-1 nT^-1 (~7.0 Hz/nT, alkali ground state).
DEFAULT_GYRO = 43.9598

# Relative tolerance used when deciding whether an eigenvalue is "negative
# enough" to need clamping.  Kept tiny so valid matrices pass through exactly.
_EIG_CLAMP_REL = 1e-14


@dataclass(frozen=True)
class StateVector:
    """Augmented filter state ``[j_x, j_z, omega]``.

    j_x, j_z : transverse spin components, spin units
    omega    : Larmor angular frequency, rad/s
    """

    j_x: float
    j_z: float
    omega: float

    def __post_init__(self):
        for name in ("j_x", "j_z", "omega"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParameter(f"StateVector.{name} must be finite, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.j_x, self.j_z, self.omega], dtype=float)

    @classmethod
    def from_array(cls, x) -> "StateVector":
        x = np.asarray(x, dtype=float)
        if x.shape != (3,):
            raise InvalidParameter(f"state array must have shape (3,), got {x.shape}")
        return cls(float(x[0]), float(x[1]), float(x[2]))


@dataclass(frozen=True)
class PhysicsParams:
    """Physical constants of one run.

    gamma_relax : transverse spin relaxation rate, 1/s
    g_d         : photodetector gain mapping j_x to volts, V per spin unit
    q_x, q_z    : stationary spin variance per component, spin units squared
    dt          : sample interval, s
    gyro        : gyromagnetic ratio, rad s^-1 nT^-1
    """

    gamma_relax: float
    g_d: float
    q_x: float
    q_z: float
    dt: float
    gyro: float = DEFAULT_GYRO

    def __post_init__(self):
        if not (self.gamma_relax > 0) or not math.isfinite(self.gamma_relax):
            raise InvalidParameter(f"gamma_relax must be positive, got {self.gamma_relax!r}")
        if not (self.dt > 0) or not math.isfinite(self.dt):
            raise InvalidParameter(f"dt must be positive, got {self.dt!r}")
        if self.q_x < 0 or self.q_z < 0:
            raise InvalidParameter(f"q_x/q_z must be >= 0, got {self.q_x!r}, {self.q_z!r}")
        if not math.isfinite(self.g_d):
            raise InvalidParameter(f"g_d must be finite, got {self.g_d!r}")
        if not (self.gyro > 0):
            raise InvalidParameter(f"gyro must be positive, got {self.gyro!r}")

    @property
    def fs(self) -> float:
        """Sampling rate in Sa/s."""
        return 1.0 / self.dt


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement-noise model and adaptation settings.

    r_true       : actual photodetection noise variance per sample, V^2
    r_init       : variance the filter is told at start, V^2
    alpha        : random-walk drive variance on omega per step, (rad/s)^2
    adapt_window : sliding-window length (samples) for noise adaptation
    r_floor      : smallest admissible adapted variance, V^2
    """

    r_true: float
    r_init: float
    alpha: float
    adapt_window: int = 200
    r_floor: float = 1e-9

    def __post_init__(self):
        if not (self.r_true > 0):
            raise InvalidParameter(f"r_true must be positive, got {self.r_true!r}")
        if not (self.r_init > 0):
            raise InvalidParameter(f"r_init must be positive, got {self.r_init!r}")
        if self.alpha < 0:
            raise InvalidParameter(f"alpha must be >= 0, got {self.alpha!r}")
        if int(self.adapt_window) != self.adapt_window or self.adapt_window < 2:
            raise InvalidParameter(f"adapt_window must be an integer >= 2, got {self.adapt_window!r}")
        if not (self.r_floor > 0):
            raise InvalidParameter(f"r_floor must be positive, got {self.r_floor!r}")


def validate_covariance(p) -> np.ndarray:
    """Return a symmetric PSD version of ``p``, or raise :class:`InvalidCovariance`.

    The input must be a finite ``(3, 3)`` (or generally square) matrix.  The
    result is ``(p + p.T)/2`` with any negative eigenvalues clamped to zero.
    Matrices that are already symmetric PSD pass through bit-identically, so
    the function is idempotent.
    """

    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InvalidCovariance(f"covariance must be square, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidCovariance("covariance has non-finite entries")

    sym = 0.5 * (p + p.T)
    w, v = np.linalg.eigh(sym)
    scale = max(float(np.abs(w).max()), 1.0)
    if w[0] >= -_EIG_CLAMP_REL * scale and np.array_equal(sym, p):
        # Already symmetric and PSD to working precision: no repair.
        return p
    if w[0] >= -_EIG_CLAMP_REL * scale:
        return sym
    w_clamped = np.clip(w, 0.0, None)
    repaired = (v * w_clamped) @ v.T
    return 0.5 * (repaired + repaired.T)
