"""Synthetic spin-noise trace generation.

The transverse collective spin precesses at the (possibly time-varying)
Larmor frequency while relaxing at rate ``gamma_relax``; thermal agitation
keeps it in a stationary fluctuation state.  The photodetector reads out
``g_d * j_x`` plus white noise.  Propagation uses the exact one-step solution
of the rotation-decay dynamics, so there is no discretization bias at any
sample rate; an Euler-Maruyama integrator with configurable substeps is
available for cross-checking that claim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import _kernels
from .core import NoiseConfig, PhysicsParams, StateVector
from .errors import InvalidParameter
from .fields import FieldModelSpec, field_digest, omega_trajectory


@dataclass
class Trace:
    """One simulated or ingested measurement record.

    dt         : sample interval, s
    y          : detector voltage per sample, V
    omega_true : ground-truth angular frequency per sample, rad/s (or None)
    meta       : provenance dictionary (parameters, seed, source, ...)
    """

    dt: float
    y: np.ndarray
    omega_true: np.ndarray | None = None
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.dt <= 0 or not math.isfinite(self.dt):
            raise InvalidParameter(f"dt must be positive, got {self.dt!r}")
        if self.y.ndim != 1 or self.y.size < 1:
            raise InvalidParameter("y must be a 1-D array with at least one sample")
        if self.omega_true is not None:
            self.omega_true = np.asarray(self.omega_true, dtype=float)
            if self.omega_true.shape != self.y.shape:
                raise InvalidParameter("omega_true must match y in length")

    @property
    def t(self) -> np.ndarray:
        """Sample times t_k = k * dt."""
        return np.arange(self.y.size) * self.dt

    @property
    def fs(self) -> float:
        return 1.0 / self.dt


def propagate_mean(x: StateVector, p: PhysicsParams) -> StateVector:
    """Deterministic one-step propagation of the augmented state.

    The spin pair rotates by ``omega * dt`` and shrinks by ``exp(-gamma*dt)``;
    omega itself is carried unchanged.
    """
    decay = math.exp(-p.gamma_relax * p.dt)
    c = math.cos(x.omega * p.dt)
    s = math.sin(x.omega * p.dt)
    return StateVector(
        decay * (c * x.j_x - s * x.j_z),
        decay * (s * x.j_x + c * x.j_z),
        x.omega,
    )


def process_noise_cov(p: PhysicsParams, alpha: float) -> np.ndarray:
    """Per-step process-noise covariance ``diag(qs*q_x, qs*q_z, alpha)``.

    ``qs = 1 - exp(-2*gamma*dt)`` is the exact one-step renewal factor; it
    tends to ``2*gamma*dt`` for small steps and keeps the stationary spin
    variance at q_x/q_z for any step size.
    """
    if alpha < 0:
        raise InvalidParameter(f"alpha must be >= 0, got {alpha!r}")
    qs = -math.expm1(-2.0 * p.gamma_relax * p.dt)
    return np.diag([qs * p.q_x, qs * p.q_z, alpha])


def synthesize_measurement(j_x: float, g_d: float, r: float, draw: float) -> float:
    """One detector sample: ``g_d * j_x + sqrt(r) * draw``."""
    if r < 0:
        raise InvalidParameter(f"r must be >= 0, got {r!r}")
    return g_d * j_x + math.sqrt(r) * draw


def simulate_trace(physics: PhysicsParams, noise: NoiseConfig,
                   field: FieldModelSpec, steps: int, seed: int,
                   integrator: str = "exact", substeps: int = 1,
                   r_jump_time_s: float | None = None,
                   r_jump_factor: float = 1.0) -> Trace:
    """Simulate ``steps`` samples of detector voltage under ``field``.

    The seed feeds three independent sub-streams (field, spin, detector), so
    e.g. switching between a stochastic field and a stored replay of the same
    realization leaves the spin and detector noise unchanged.  Draw order
    within each stream is fixed; a given (seed, config) pair reproduces the
    trace bit for bit.

    integrator="euler" replaces the exact one-step propagation by
    Euler-Maruyama with ``substeps`` micro-steps per sample (discretization-
    bias studies); the default exact path ignores ``substeps``.

    ``r_jump_time_s`` optionally multiplies the measurement-noise variance by
    ``r_jump_factor`` for all samples with t >= that time.
    """
    if steps < 1:
        raise InvalidParameter(f"steps must be >= 1, got {steps!r}")
    if integrator not in ("exact", "euler"):
        raise InvalidParameter(f"integrator must be 'exact' or 'euler', got {integrator!r}")
    if substeps < 1:
        raise InvalidParameter(f"substeps must be >= 1, got {substeps!r}")
    if r_jump_factor <= 0:
        raise InvalidParameter(f"r_jump_factor must be positive, got {r_jump_factor!r}")

    base = np.random.SeedSequence(seed)
    field_ss, spin_ss, meas_ss = base.spawn(3)
    rng_field = np.random.default_rng(field_ss)
    rng_spin = np.random.default_rng(spin_ss)
    rng_meas = np.random.default_rng(meas_ss)

    omega = omega_trajectory(field, steps, physics.dt, rng_field, gyro=physics.gyro)

    r_sqrt = np.full(steps, math.sqrt(noise.r_true))
    jump_idx = None
    if r_jump_time_s is not None:
        if r_jump_time_s < 0:
            raise InvalidParameter(f"r_jump_time_s must be >= 0, got {r_jump_time_s!r}")
        # new variance applies to every sample with t_k >= jump time
        jump_idx = int(math.ceil(r_jump_time_s / physics.dt - 1e-9))
        if jump_idx < steps:
            r_sqrt[jump_idx:] = math.sqrt(noise.r_true * r_jump_factor)

    init_draws = rng_spin.standard_normal(2)
    meas_draws = rng_meas.standard_normal(steps)
    jx = np.empty(steps)
    y = np.empty(steps)

    if integrator == "exact":
        spin_draws = rng_spin.standard_normal((max(steps - 1, 1), 2))
        _kernels.simulate_exact_core(
            omega, physics.dt, physics.gamma_relax, physics.g_d,
            physics.q_x, physics.q_z, init_draws, spin_draws,
            meas_draws, r_sqrt, jx, y)
    else:
        sub_draws = rng_spin.standard_normal((max(steps - 1, 1), substeps, 2))
        _kernels.simulate_euler_core(
            omega, physics.dt, substeps, physics.gamma_relax, physics.g_d,
            physics.q_x, physics.q_z, init_draws, sub_draws,
            meas_draws, r_sqrt, jx, y)

    meta = {
        "kind": "simulated",
        "physics": {
            "gamma_relax": physics.gamma_relax, "g_d": physics.g_d,
            "q_x": physics.q_x, "q_z": physics.q_z,
            "dt": physics.dt, "gyro": physics.gyro,
        },
        "noise": {
            "r_true": noise.r_true, "r_init": noise.r_init,
            "alpha": noise.alpha, "adapt_window": noise.adapt_window,
            "r_floor": noise.r_floor,
        },
        "field": field_digest(field),
        "seed": int(seed),
        "steps": int(steps),
        "integrator": integrator,
        "substeps": int(substeps),
        "r_jump_time_s": r_jump_time_s,
        "r_jump_factor": r_jump_factor,
    }
    return Trace(physics.dt, y, omega, meta)


# ----------------------------------------------------------------------------
# delimited export
# ----------------------------------------------------------------------------

def write_trace_csv(trace: Trace, path) -> Path:
    """Write ``t_s,y_V,omega_true_rad_s`` rows plus a JSON meta sidecar.

    Floats are rendered with shortest round-trip precision, so re-ingesting
    the file recovers the array values exactly.  Returns the CSV path; the
    sidecar lands next to it as ``<stem>.meta.json``.
    """
    path = Path(path)
    t = trace.t.tolist()
    y = trace.y.tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_s,y_V,omega_true_rad_s\n")
        if trace.omega_true is None:
            for k in range(len(y)):
                fh.write(f"{t[k]!r},{y[k]!r},\n")
        else:
            w = trace.omega_true.tolist()
            for k in range(len(y)):
                fh.write(f"{t[k]!r},{y[k]!r},{w[k]!r}\n")
    meta_path = path.with_suffix(".meta.json")
    with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(trace.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
