"""Spin-noise spectroscopy baseline: averaged periodogram and Lorentzian fit.

This is the conventional frequency-domain route to the same physics the
tracker handles in the time domain: average windowed periodograms of the
detector voltage, fit the noise peak with a Lorentzian on a flat background,
and convert the fitted line into a field value and a shot-noise-style
sensitivity figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import welch as _scipy_welch

from .core import DEFAULT_GYRO
from .errors import FitDiverged, InvalidParameter

#: How the sensitivity figure is computed from a fit (kept verbatim in
#: machine-readable reports so the number stays interpretable).
SENSITIVITY_FORMULA = "(2*pi/gyro) * hwhm_Hz * sqrt(floor/amplitude)"


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density estimate.

    freqs             : bin centers, Hz
    psd               : density, V^2/Hz (sums against df to the signal variance)
    resolution        : bin spacing fs/segment_len, Hz
    segments_averaged : number of (overlapping) segments averaged
    """

    freqs: np.ndarray
    psd: np.ndarray
    resolution: float
    segments_averaged: int


@dataclass(frozen=True)
class LorentzianFit:
    """Fitted peak parameters for ``floor + amplitude*hwhm^2/((f-f0)^2+hwhm^2)``.

    f0 and hwhm are in Hz; amplitude and floor in V^2/Hz.  ``degenerate`` is
    set when the spectrum showed no usable peak (ratio below 1.5) and the
    returned numbers are init-quality only.
    """

    f0: float
    hwhm: float
    amplitude: float
    floor: float
    residual_rms: float
    degenerate: bool = False


def welch_psd(y, fs: float, segment_len: int, overlap: float = 0.5) -> Spectrum:
    """Hann-windowed averaged periodogram with fractional ``overlap``.

    Density normalization: ``sum(psd) * df`` approximates the variance of
    ``y`` (no detrending, so a DC component stays in the f=0 bin).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidParameter("y must be one-dimensional")
    if fs <= 0:
        raise InvalidParameter(f"fs must be positive, got {fs!r}")
    if segment_len < 8:
        raise InvalidParameter(f"segment_len must be >= 8, got {segment_len!r}")
    if segment_len > y.size:
        raise InvalidParameter(
            f"segment_len {segment_len} exceeds trace length {y.size}")
    if not (0.0 <= overlap < 1.0):
        raise InvalidParameter(f"overlap must be in [0, 1), got {overlap!r}")

    noverlap = int(round(overlap * segment_len))
    freqs, psd = _scipy_welch(
        y, fs=fs, window="hann", nperseg=segment_len, noverlap=noverlap,
        detrend=False, return_onesided=True, scaling="density")
    step = segment_len - noverlap
    segments = 1 + (y.size - segment_len) // step
    return Spectrum(freqs, psd, fs / segment_len, int(segments))


def write_spectrum_csv(spectrum: Spectrum, path) -> Path:
    """Write ``f_Hz,psd_V2_per_Hz`` rows with shortest round-trip floats."""
    path = Path(path)
    f = spectrum.freqs.tolist()
    p = spectrum.psd.tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("f_Hz,psd_V2_per_Hz\n")
        for k in range(len(f)):
            fh.write(f"{f[k]!r},{p[k]!r}\n")
    return path


# ----------------------------------------------------------------------------
# Lorentzian fitting
# ----------------------------------------------------------------------------

def _model_and_jacobian(theta, f, with_jacobian=True):
    """Model values and (optionally) the Jacobian in the internal parameters.

    Internal vector: (f0, h, a, b) with hwhm = |h|, amplitude = a^2,
    floor = b^2.  The squares keep amplitude and floor non-negative and the
    model is even in h, so the solver runs unconstrained.
    """
    f0, h, a, b = theta
    df = f - f0
    d = df * df + h * h
    m = b * b + (a * a) * (h * h) / d
    if not with_jacobian:
        return m, None
    jac = np.empty((f.size, 4))
    jac[:, 0] = (a * a) * (h * h) * 2.0 * df / (d * d)
    jac[:, 1] = 2.0 * (a * a) * h * df * df / (d * d)
    jac[:, 2] = 2.0 * a * (h * h) / d
    jac[:, 3] = np.full(f.size, 2.0 * b)
    return m, jac


def _initial_guess(f, p):
    ipk = int(np.argmax(p))
    floor0 = float(np.median(p))
    amp0 = max(float(p[ipk]) - floor0, 0.0)
    half = floor0 + 0.5 * amp0
    # walk outward from the peak to the half-power crossings
    left = ipk
    while left > 0 and p[left] > half:
        left -= 1
    right = ipk
    while right < p.size - 1 and p[right] > half:
        right += 1
    hwhm0 = 0.5 * (f[right] - f[left])
    df_bin = float(np.min(np.diff(f))) if f.size > 1 else 1.0
    if not hwhm0 > 0:
        hwhm0 = 3.0 * df_bin
    return float(f[ipk]), float(hwhm0), amp0, floor0


def _levenberg(theta0, f, p, max_iterations, gradient_tol):
    """Damped Gauss-Newton on the squared residuals.

    Returns (theta, residual, converged, iterations).
    """
    theta = np.asarray(theta0, dtype=float).copy()
    m, jac = _model_and_jacobian(theta, f)
    resid = m - p
    cost = float(resid @ resid)
    grad = jac.T @ resid
    g0 = max(float(np.abs(grad).max()), 1e-300)
    lam = 1e-3
    for it in range(max_iterations):
        if float(np.abs(grad).max()) <= gradient_tol * g0 or cost == 0.0:
            return theta, resid, True, it
        jtj = jac.T @ jac
        accepted = False
        for _ in range(50):
            damped = jtj + lam * np.diag(np.clip(np.diag(jtj), 1e-300, None))
            try:
                delta = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + delta
            m_t, _ = _model_and_jacobian(trial, f, with_jacobian=False)
            r_t = m_t - p
            c_t = float(r_t @ r_t)
            if np.isfinite(c_t) and c_t < cost:
                theta = trial
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step found at any damping: treat as stationary
            return theta, resid, float(np.abs(grad).max()) <= 1e-6 * g0, it
        m, jac = _model_and_jacobian(theta, f)
        resid = m - p
        cost = float(resid @ resid)
        grad = jac.T @ resid
    converged = float(np.abs(grad).max()) <= gradient_tol * g0
    return theta, resid, converged, max_iterations


def _pack(theta, resid, degenerate=False):
    f0, h, a, b = theta
    return LorentzianFit(
        f0=float(f0), hwhm=abs(float(h)), amplitude=float(a * a),
        floor=float(b * b), residual_rms=float(np.sqrt(np.mean(resid * resid))),
        degenerate=degenerate)


def fit_lorentzian(spectrum: Spectrum, init_guess: LorentzianFit | tuple | None = None,
                   max_iterations: int = 200, gradient_tol: float = 1e-10) -> LorentzianFit:
    """Fit the positive-frequency peak of ``spectrum``.

    The f=0 bin is excluded (it can hold DC power that the line-shape model
    does not describe).  Starting values come from ``init_guess`` (a previous
    fit or an ``(f0, hwhm, amplitude, floor)`` tuple) or from a peak scan.
    If the spectrum has no usable peak (max below 1.5x the floor) the scan
    values are returned immediately with ``degenerate=True``.  A failed first
    solve falls back to a grid scan over candidate peak positions before
    giving up with :class:`FitDiverged` (which carries the last iterate).
    """
    mask = spectrum.freqs > 0.0
    f = np.asarray(spectrum.freqs, dtype=float)[mask]
    p = np.asarray(spectrum.psd, dtype=float)[mask]
    if f.size < 8:
        raise InvalidParameter(f"need at least 8 positive-frequency bins, got {f.size}")

    if init_guess is None:
        f00, hwhm0, amp0, floor0 = _initial_guess(f, p)
        floor_scale = max(floor0, float(np.mean(p)) * 1e-12, 1e-300)
        if float(p.max()) / floor_scale < 1.5:
            theta = np.array([f00, hwhm0, math.sqrt(amp0), math.sqrt(floor0)])
            m, _ = _model_and_jacobian(theta, f, with_jacobian=False)
            return _pack(theta, m - p, degenerate=True)
    elif isinstance(init_guess, LorentzianFit):
        f00, hwhm0, amp0, floor0 = (init_guess.f0, init_guess.hwhm,
                                    init_guess.amplitude, init_guess.floor)
    else:
        f00, hwhm0, amp0, floor0 = init_guess

    theta0 = np.array([f00, hwhm0, math.sqrt(max(amp0, 0.0)), math.sqrt(max(floor0, 0.0))])
    theta, resid, converged, _ = _levenberg(theta0, f, p, max_iterations, gradient_tol)
    if converged:
        return _pack(theta, resid)

    # grid fallback: scan candidate centers (and a few widths), seed from the
    # cheapest, and solve again
    best = (math.inf, None)
    df_bin = float(np.min(np.diff(f)))
    floor0 = float(np.median(p))
    for fc in np.linspace(f[1], f[-2], 24):
        for hw in (2.0 * df_bin, 8.0 * df_bin, 32.0 * df_bin):
            amp = max(float(np.interp(fc, f, p)) - floor0, 0.0)
            th = np.array([fc, hw, math.sqrt(amp), math.sqrt(floor0)])
            m, _ = _model_and_jacobian(th, f, with_jacobian=False)
            r = m - p
            c = float(r @ r)
            if c < best[0]:
                best = (c, th)
    theta2, resid2, converged2, _ = _levenberg(best[1], f, p, max_iterations, gradient_tol)
    if converged2:
        return _pack(theta2, resid2)
    raise FitDiverged(
        f"no convergence within {max_iterations} iterations",
        last_fit=_pack(theta2, resid2))


def sensitivity_estimate(fit: LorentzianFit, gyro: float = DEFAULT_GYRO) -> float:
    """Field sensitivity in nT/sqrt(Hz): ``(2*pi/gyro) * hwhm * sqrt(floor/amplitude)``.

    Narrower lines and higher peak-to-floor contrast both improve (reduce)
    the figure.  Raises :class:`InvalidParameter` for degenerate fits or a
    non-positive amplitude.
    """
    if fit.degenerate:
        raise InvalidParameter("cannot derive a sensitivity from a degenerate fit")
    if not (fit.amplitude > 0):
        raise InvalidParameter(f"amplitude must be positive, got {fit.amplitude!r}")
    if not (gyro > 0):
        raise InvalidParameter(f"gyro must be positive, got {gyro!r}")
    if fit.floor < 0 or fit.hwhm <= 0:
        raise InvalidParameter("fit has non-physical floor or width")
    return (2.0 * math.pi / gyro) * fit.hwhm * math.sqrt(fit.floor / fit.amplitude)


def fit_report(fit: LorentzianFit, gyro: float = DEFAULT_GYRO) -> dict:
    """JSON-compatible summary of a fit, including the sensitivity figure."""
    report = {
        "f0_hz": fit.f0,
        "hwhm_hz": fit.hwhm,
        "amplitude_v2_per_hz": fit.amplitude,
        "floor_v2_per_hz": fit.floor,
        "residual_rms_v2_per_hz": fit.residual_rms,
        "degenerate": fit.degenerate,
        "omega_rad_s": 2.0 * math.pi * fit.f0,
        "b_nt": 2.0 * math.pi * fit.f0 / gyro,
        "sensitivity_formula": SENSITIVITY_FORMULA,
    }
    if not fit.degenerate and fit.amplitude > 0 and fit.hwhm > 0 and fit.floor >= 0:
        report["sensitivity_nt_per_rthz"] = sensitivity_estimate(fit, gyro)
    else:
        report["sensitivity_nt_per_rthz"] = None
    return report
