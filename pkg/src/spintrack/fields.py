"""Magnetic-field (Larmor frequency) trajectory models.

Every model produces the angular frequency ``omega(t)`` in rad/s that drives
the spin precession.  Stochastic models (random walk, Ornstein-Uhlenbeck)
advance once per sample; deterministic models (constant, piecewise, stored
waveform) are evaluated on the sample grid.  Waveforms are stored as magnetic
field in nT and converted through the gyromagnetic ratio only at evaluation
time, so files stay in instrument units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from numba import njit

from .core import DEFAULT_GYRO
from .errors import InvalidParameter, OutOfRange


@dataclass(frozen=True)
class ConstantField:
    """Fixed Larmor frequency ``omega0`` (rad/s)."""

    omega0: float


@dataclass(frozen=True)
class RandomWalkField:
    """Discrete random walk: ``omega_{k+1} = omega_k + sqrt(sigma2) * xi_k``.

    sigma2 is the per-step increment variance in (rad/s)^2.
    """

    omega0: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise InvalidParameter(f"sigma2 must be >= 0, got {self.sigma2!r}")


@dataclass(frozen=True)
class OrnsteinUhlenbeckField:
    """Mean-reverting diffusion with rate ``theta`` (1/s) and drive ``sigma_ou``.

    sigma_ou is the continuous-time noise intensity in rad s^-1 Hz^-1/2; the
    stationary standard deviation is ``sigma_ou / sqrt(2 * theta)``.
    """

    omega0: float
    mean: float
    theta: float
    sigma_ou: float

    def __post_init__(self):
        if self.theta < 0:
            raise InvalidParameter(f"theta must be >= 0, got {self.theta!r}")
        if self.sigma_ou < 0:
            raise InvalidParameter(f"sigma_ou must be >= 0, got {self.sigma_ou!r}")


@dataclass(frozen=True)
class PiecewiseField:
    """Piecewise-constant frequency: ``segments`` is ((t_start, omega), ...).

    Start times must be strictly increasing.  Each level holds on the
    right-open interval [t_start, next t_start); the last level holds forever.
    """

    segments: tuple

    def __post_init__(self):
        if len(self.segments) == 0:
            raise InvalidParameter("piecewise field needs at least one segment")
        starts = [float(t) for t, _ in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise InvalidParameter("segment start times must be strictly increasing")


@dataclass(frozen=True)
class WaveformField:
    """Stored magnetic-field waveform, linearly interpolated.

    times_s : strictly increasing sample times, s
    b_nt    : field values at those times, nT
    """

    times_s: np.ndarray
    b_nt: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times_s, dtype=float)
        b = np.asarray(self.b_nt, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise InvalidParameter("waveform needs at least two samples")
        if b.shape != t.shape:
            raise InvalidParameter("waveform time and field arrays must have equal length")
        if np.any(np.diff(t) <= 0):
            raise InvalidParameter("waveform times must be strictly increasing")
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "b_nt", b)


FieldModelSpec = Union[
    ConstantField, RandomWalkField, OrnsteinUhlenbeckField, PiecewiseField, WaveformField
]


# ----------------------------------------------------------------------------
# single-step / point-evaluation operations
# ----------------------------------------------------------------------------

def step_random_walk(omega: float, sigma2: float, draw: float) -> float:
    """One random-walk step: ``omega + sqrt(sigma2) * draw``."""
    if sigma2 < 0:
        raise InvalidParameter(f"sigma2 must be >= 0, got {sigma2!r}")
    return omega + math.sqrt(sigma2) * draw


def step_ou(omega: float, mean: float, theta: float, sigma_ou: float,
            dt: float, draw: float) -> float:
    """One exact-transition Ornstein-Uhlenbeck step over ``dt`` seconds.

    Uses the closed-form conditional distribution, so the step is exact for
    any dt.  theta == 0 degenerates to a pure random walk with intensity
    sigma_ou.
    """
    if dt <= 0:
        raise InvalidParameter(f"dt must be positive, got {dt!r}")
    if theta < 0 or sigma_ou < 0:
        raise InvalidParameter("theta and sigma_ou must be >= 0")
    if theta == 0.0:
        return omega + sigma_ou * math.sqrt(dt) * draw
    decay = math.exp(-theta * dt)
    var = -math.expm1(-2.0 * theta * dt) / (2.0 * theta)
    return mean + (omega - mean) * decay + sigma_ou * math.sqrt(var) * draw


def eval_piecewise(spec: PiecewiseField, t: float) -> float:
    """Level active at time ``t`` (right-open segments: a boundary takes the new level)."""
    starts = np.array([s for s, _ in spec.segments], dtype=float)
    if t < starts[0]:
        raise OutOfRange(f"t={t!r} precedes first segment start {starts[0]!r}")
    idx = int(np.searchsorted(starts, t, side="right")) - 1
    return float(spec.segments[idx][1])


def eval_waveform(spec: WaveformField, t, gyro: float = DEFAULT_GYRO):
    """Interpolated ``omega`` (rad/s) at time(s) ``t``: linear in B, scaled by gyro.

    Raises :class:`OutOfRange` if any query time falls outside the stored span.
    """
    tq = np.asarray(t, dtype=float)
    t0, t1 = spec.times_s[0], spec.times_s[-1]
    if np.any(tq < t0) or np.any(tq > t1):
        raise OutOfRange(
            f"waveform query outside stored span [{t0!r}, {t1!r}]"
        )
    out = np.interp(tq, spec.times_s, spec.b_nt) * gyro
    return float(out) if np.isscalar(t) else out


# ----------------------------------------------------------------------------
# full-trajectory synthesis
# ----------------------------------------------------------------------------

@njit(cache=True)
def _ou_path(omega0, mean, decay, noise_std, draws, out):
    out[0] = omega0
    prev = omega0
    for k in range(draws.size):
        prev = mean + (prev - mean) * decay + noise_std * draws[k]
        out[k + 1] = prev


def omega_trajectory(field: FieldModelSpec, steps: int, dt: float, rng,
                     gyro: float = DEFAULT_GYRO) -> np.ndarray:
    """Ground-truth omega series of length ``steps`` on the grid t_k = k*dt.

    Stochastic variants consume ``steps - 1`` standard-normal draws from
    ``rng`` (one per advance); deterministic variants consume none, so a given
    rng stream is unaffected by downstream noise draws.  With a fixed seed the
    result is reproducible bit for bit.
    """
    if steps < 1:
        raise InvalidParameter(f"steps must be >= 1, got {steps!r}")
    if dt <= 0:
        raise InvalidParameter(f"dt must be positive, got {dt!r}")

    if isinstance(field, ConstantField):
        return np.full(steps, float(field.omega0))

    if isinstance(field, RandomWalkField):
        inc = math.sqrt(field.sigma2) * rng.standard_normal(steps - 1)
        # cumsum over [omega0, inc...] reproduces the sequential scalar
        # recursion bit for bit (same left-to-right addition order).
        return np.cumsum(np.concatenate(([field.omega0], inc)))

    if isinstance(field, OrnsteinUhlenbeckField):
        draws = rng.standard_normal(steps - 1)
        out = np.empty(steps)
        if field.theta == 0.0:
            noise_std = field.sigma_ou * math.sqrt(dt)
            return np.cumsum(np.concatenate(([field.omega0], noise_std * draws)))
        decay = math.exp(-field.theta * dt)
        noise_std = field.sigma_ou * math.sqrt(
            -math.expm1(-2.0 * field.theta * dt) / (2.0 * field.theta)
        )
        _ou_path(field.omega0, field.mean, decay, noise_std, draws, out)
        return out

    t = np.arange(steps) * dt
    if isinstance(field, PiecewiseField):
        starts = np.array([s for s, _ in field.segments], dtype=float)
        levels = np.array([w for _, w in field.segments], dtype=float)
        if t[0] < starts[0]:
            raise OutOfRange(f"run starts at t=0 before first segment ({starts[0]!r})")
        idx = np.searchsorted(starts, t, side="right") - 1
        return levels[idx]

    if isinstance(field, WaveformField):
        return eval_waveform(field, t, gyro=gyro)

    raise InvalidParameter(f"unknown field model {field!r}")


# ----------------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------------

def field_to_dict(spec: FieldModelSpec) -> dict:
    """JSON-compatible representation, reconstructable by :func:`field_from_dict`."""
    if isinstance(spec, ConstantField):
        return {"kind": "constant", "omega0": spec.omega0}
    if isinstance(spec, RandomWalkField):
        return {"kind": "random_walk", "omega0": spec.omega0, "sigma2": spec.sigma2}
    if isinstance(spec, OrnsteinUhlenbeckField):
        return {"kind": "ou", "omega0": spec.omega0, "mean": spec.mean,
                "theta": spec.theta, "sigma_ou": spec.sigma_ou}
    if isinstance(spec, PiecewiseField):
        return {"kind": "piecewise",
                "segments": [[float(t), float(w)] for t, w in spec.segments]}
    if isinstance(spec, WaveformField):
        return {"kind": "waveform",
                "times_s": spec.times_s.tolist(), "b_nt": spec.b_nt.tolist()}
    raise InvalidParameter(f"unknown field model {spec!r}")


def field_from_dict(d: dict) -> FieldModelSpec:
    """Inverse of :func:`field_to_dict`.

    A waveform entry may carry inline samples (``times_s``/``b_nt``) or a
    ``path`` pointing at a reference-field CSV.
    """
    try:
        kind = d["kind"]
    except (KeyError, TypeError):
        raise InvalidParameter(f"field spec needs a 'kind' entry, got {d!r}") from None
    if kind == "constant":
        return ConstantField(float(d["omega0"]))
    if kind == "random_walk":
        return RandomWalkField(float(d["omega0"]), float(d["sigma2"]))
    if kind == "ou":
        return OrnsteinUhlenbeckField(float(d["omega0"]), float(d["mean"]),
                                      float(d["theta"]), float(d["sigma_ou"]))
    if kind == "piecewise":
        return PiecewiseField(tuple((float(t), float(w)) for t, w in d["segments"]))
    if kind == "waveform":
        if "path" in d:
            from .ingest import load_reference_field_csv
            return load_reference_field_csv(d["path"])
        return WaveformField(np.asarray(d["times_s"], dtype=float),
                             np.asarray(d["b_nt"], dtype=float))
    raise InvalidParameter(f"unknown field kind {kind!r}")


def field_digest(spec: FieldModelSpec) -> dict:
    """Compact descriptor for provenance records (not reconstructable)."""
    d = field_to_dict(spec)
    if d["kind"] == "waveform":
        t = spec.times_s
        return {"kind": "waveform", "samples": int(t.size),
                "t_first_s": float(t[0]), "t_last_s": float(t[-1]),
                "b_min_nt": float(spec.b_nt.min()), "b_max_nt": float(spec.b_nt.max())}
    return d


# ----------------------------------------------------------------------------
# bundled synthetic reference waveforms
# ----------------------------------------------------------------------------

def make_random_walk_waveform(duration_s: float = 5.0, fs: float = 1000.0,
                              step_nt: float = 0.0031, seed: int = 7,
                              start_nt: float = 0.0) -> WaveformField:
    """A stored random-walk field realization in nT (reference-file stand-in).

    With the defaults the accumulated excursion over the window is on the
    order of a few tenths of a nT on top of ``start_nt``, i.e. a weak
    laboratory drift riding on a bias field.
    """
    n = int(round(duration_s * fs)) + 1
    rng = np.random.default_rng(seed)
    b = np.cumsum(np.concatenate(([start_nt], step_nt * rng.standard_normal(n - 1))))
    return WaveformField(np.arange(n) / fs, b)


def make_burst_waveform(duration_s: float = 5.0, fs: float = 1000.0,
                        amplitude_nt: float = 0.22, center_s: float = 1.0,
                        width_s: float = 0.25, cycles_hz: float = 4.0,
                        bias_nt: float = 0.0) -> WaveformField:
    """A transient oscillatory burst in nT: bias plus envelope times a sine.

    Mimics the shape of a geophysical magnetic transient -- quiet, a few
    swelling oscillation cycles, quiet again -- at a sub-nT amplitude on top
    of a constant bias field.
    """
    n = int(round(duration_s * fs)) + 1
    t = np.arange(n) / fs
    envelope = np.exp(-0.5 * ((t - center_s) / width_s) ** 2)
    b = bias_nt + amplitude_nt * envelope * np.sin(2.0 * np.pi * cycles_hz * (t - center_s))
    return WaveformField(t, b)


# Exact parameters behind the CSVs shipped in spintrack/data; regenerating
# with these must reproduce the packaged files bit for bit.
_BIAS_NT = 2.0 * math.pi * 2000.0 / DEFAULT_GYRO
BUNDLED_BURST_PARAMS = dict(duration_s=5.0, fs=1000.0, amplitude_nt=0.22,
                            center_s=1.0, width_s=0.25, cycles_hz=4.0,
                            bias_nt=_BIAS_NT)
BUNDLED_DRIFT_PARAMS = dict(duration_s=5.0, fs=1000.0, step_nt=0.0031,
                            seed=7, start_nt=_BIAS_NT)


def make_bundled_burst() -> WaveformField:
    """Regenerate the packaged transient-burst waveform."""
    return make_burst_waveform(**BUNDLED_BURST_PARAMS)


def make_bundled_drift() -> WaveformField:
    """Regenerate the packaged random-walk drift waveform."""
    return make_random_walk_waveform(**BUNDLED_DRIFT_PARAMS)
