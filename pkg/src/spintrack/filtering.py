"""Frequency tracking by extended Kalman filtering with optional noise adaptation.

The tracker runs on the augmented state ``[j_x, j_z, omega]``: it follows the
noisy spin precession sample by sample and treats the Larmor frequency as a
random-walk parameter, so the field estimate falls out of the covariance
machinery with no extra fitting stage.  In ``aekf`` mode the measurement-noise
variance is re-estimated on a sliding window of innovations, which keeps the
gain sensible when the configured variance is wrong or drifts mid-run.

The modular operations here (:func:`jacobian_f`, :func:`ekf_predict`,
:func:`ekf_update`, :func:`adapt_r`) define the per-step arithmetic;
:func:`run_filter` executes the same arithmetic through a compiled kernel and
is pinned to the modular path by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .core import NoiseConfig, PhysicsParams, StateVector, validate_covariance
from .errors import InvalidParameter, NumericalFailure
from .simulate import Trace, process_noise_cov, propagate_mean

_MODES = ("ekf", "aekf")
_CONVENTIONS = ("standard", "flipped")


@dataclass(frozen=True, eq=False)
class FilterConfig:
    """Everything a filter run needs besides the trace itself.

    mode             : "ekf" (fixed r_init) or "aekf" (windowed adaptation)
    init_state       : prior mean at the first predict
    init_cov         : prior covariance (validated/symmetrized on construction)
    adapt_convention : "standard" subtracts the predicted innovation power from
                       the window average of v^2; "flipped" evaluates the same
                       two terms in the opposite order (sign-inverted variant,
                       kept selectable for comparison runs)
    """

    mode: str
    physics: PhysicsParams
    noise: NoiseConfig
    init_state: StateVector
    init_cov: np.ndarray
    adapt_convention: str = "standard"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise InvalidParameter(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.adapt_convention not in _CONVENTIONS:
            raise InvalidParameter(
                f"adapt_convention must be one of {_CONVENTIONS}, got {self.adapt_convention!r}")
        object.__setattr__(self, "init_cov", validate_covariance(self.init_cov))


@dataclass
class FilterOutput:
    """Per-sample filter history.

    x_hat      : (steps, 3) posterior state means
    p_diag     : (steps, 3) posterior covariance diagonal
    innovation : (steps,) measurement-minus-prediction residuals, V
    r_hat      : (steps,) measurement-noise variance used at each update, V^2
    dt         : sample interval, s
    """

    x_hat: np.ndarray
    p_diag: np.ndarray
    innovation: np.ndarray
    r_hat: np.ndarray
    dt: float

    @property
    def omega_hat(self) -> np.ndarray:
        return self.x_hat[:, 2]

    @property
    def p_omega(self) -> np.ndarray:
        return self.p_diag[:, 2]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.x_hat.shape[0]) * self.dt


def jacobian_f(x: StateVector, p: PhysicsParams) -> np.ndarray:
    """State-transition Jacobian evaluated at ``x``.

    The spin block is the decayed rotation itself (the dynamics are linear in
    the spin); the third column carries the sensitivity of the rotated spin to
    the frequency, which is what couples measurement information into omega.
    """
    decay = math.exp(-p.gamma_relax * p.dt)
    c = math.cos(x.omega * p.dt)
    s = math.sin(x.omega * p.dt)
    return np.array([
        [decay * c, -decay * s, decay * p.dt * (-s * x.j_x - c * x.j_z)],
        [decay * s, decay * c, decay * p.dt * (c * x.j_x - s * x.j_z)],
        [0.0, 0.0, 1.0],
    ])


def ekf_predict(x: StateVector, p: np.ndarray, cfg: FilterConfig):
    """Time update: propagate the mean exactly, the covariance to first order.

    Returns ``(x_minus, p_minus)`` with ``p_minus`` symmetrized.
    """
    f = jacobian_f(x, cfg.physics)
    x_minus = propagate_mean(x, cfg.physics)
    q = process_noise_cov(cfg.physics, cfg.noise.alpha)
    p_minus = f @ np.asarray(p, dtype=float) @ f.T + q
    return x_minus, 0.5 * (p_minus + p_minus.T)


def ekf_update(x_minus: StateVector, p_minus: np.ndarray, y: float,
               g_d: float, r: float):
    """Measurement update against the scalar readout ``y = g_d * j_x + noise``.

    Joseph-form covariance update, then symmetrization, so the posterior stays
    PSD even with a strongly mismatched ``r``.  Returns ``(x, p, innovation)``.
    Raises :class:`NumericalFailure` if the innovation variance is not
    positive, which signals covariance corruption upstream.
    """
    p_minus = np.asarray(p_minus, dtype=float)
    s = g_d * g_d * p_minus[0, 0] + r
    if s <= 0.0:
        raise NumericalFailure(f"innovation variance S={s!r} <= 0")
    innovation = y - g_d * x_minus.j_x
    k = g_d * p_minus[:, 0] / s
    x = StateVector(
        x_minus.j_x + k[0] * innovation,
        x_minus.j_z + k[1] * innovation,
        x_minus.omega + k[2] * innovation,
    )
    a = np.eye(3)
    a[:, 0] -= k * g_d
    p = a @ p_minus @ a.T + r * np.outer(k, k)
    return x, 0.5 * (p + p.T), innovation


def adapt_r(innovations: Sequence[float], hph_window: Sequence[float],
            noise: NoiseConfig, previous: float | None = None,
            convention: str = "standard") -> float:
    """Windowed measurement-noise estimate.

    ``innovations`` holds the most recent residuals (V); ``hph_window`` holds
    the matching per-step predicted innovation power from the prior covariance,
    ``g_d^2 * P_minus[0, 0]`` (V^2).  The candidate estimate is
    ``mean(innovations^2) - mean(hph_window)``; when it falls below
    ``noise.r_floor`` the ``previous`` estimate is kept (or the floor itself,
    if there is no previous one).  ``convention="flipped"`` evaluates the
    difference in the opposite order.
    """
    v = np.asarray(innovations, dtype=float)
    h = np.asarray(hph_window, dtype=float)
    if v.size < 2:
        raise InvalidParameter(f"need at least 2 innovations in the window, got {v.size}")
    if h.shape != v.shape:
        raise InvalidParameter("innovations and hph_window must have equal length")
    if convention not in _CONVENTIONS:
        raise InvalidParameter(f"convention must be one of {_CONVENTIONS}, got {convention!r}")
    candidate = float(np.mean(np.square(v)) - np.mean(h))
    if convention == "flipped":
        candidate = -candidate
    if candidate >= noise.r_floor:
        return candidate
    return float(previous) if previous is not None else noise.r_floor


def run_filter(trace: Trace, cfg: FilterConfig) -> FilterOutput:
    """Run the configured tracker over a full trace.

    Per sample: predict, form the innovation, (aekf only) push the innovation
    and the predicted innovation power into the sliding window and re-estimate
    the measurement noise, then update using that estimate.  Adaptation is
    live from the second sample on; the first update uses ``r_init``.  In
    ``ekf`` mode every update uses ``r_init``.
    """
    steps = trace.y.size
    ph = cfg.physics
    if abs(trace.dt - ph.dt) > 1e-9 * ph.dt:
        raise InvalidParameter(
            f"trace dt {trace.dt!r} does not match configured dt {ph.dt!r}")

    x_hat = np.empty((steps, 3))
    p_diag = np.empty((steps, 3))
    innovation = np.empty(steps)
    r_hat = np.empty(steps)
    p_final = np.empty((3, 3))

    fail = _kernels.filter_core(
        np.ascontiguousarray(trace.y, dtype=float),
        ph.dt, ph.gamma_relax, ph.g_d, ph.q_x, ph.q_z, cfg.noise.alpha,
        cfg.noise.r_init, cfg.noise.r_floor, cfg.noise.adapt_window,
        cfg.mode == "aekf", cfg.adapt_convention == "flipped",
        cfg.init_state.as_array(), cfg.init_cov,
        x_hat, p_diag, innovation, r_hat, p_final)
    if fail >= 0:
        raise NumericalFailure(
            f"innovation variance became non-positive at step {fail}", step=int(fail))
    return FilterOutput(x_hat, p_diag, innovation, r_hat, trace.dt)


def write_filter_csv(output: FilterOutput, trace: Trace, path) -> Path:
    """Write ``t_s,omega_true_rad_s,omega_hat_rad_s,p_omega,innovation_V,r_hat_V2``.

    The truth column is left empty when the trace carries no ground truth
    (ingested experimental data).  Floats use shortest round-trip precision.
    """
    path = Path(path)
    t = output.t.tolist()
    w_hat = output.omega_hat.tolist()
    p_w = output.p_omega.tolist()
    v = output.innovation.tolist()
    r = output.r_hat.tolist()
    w_true = trace.omega_true.tolist() if trace.omega_true is not None else None
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_s,omega_true_rad_s,omega_hat_rad_s,p_omega,innovation_V,r_hat_V2\n")
        for k in range(len(t)):
            truth = "" if w_true is None else repr(w_true[k])
            fh.write(f"{t[k]!r},{truth},{w_hat[k]!r},{p_w[k]!r},{v[k]!r},{r[k]!r}\n")
    return path
