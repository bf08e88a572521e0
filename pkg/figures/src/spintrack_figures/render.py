"""Figure registry and batch renderer over run-directory artifacts.

Every figure is built from the delimited files and ``summary.json`` a run
wrote; nothing is recomputed.  Rendering one figure can fail (missing file,
no ground-truth column, malformed row) without aborting the rest; failures
come back in the report next to the successes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

# Fixed hash salt and text-as-text fonts make SVG output byte-stable across
# reruns; the embedded run hash stays greppable in the file.
_RC = {"svg.hashsalt": "spintrack-figures", "svg.fonttype": "none"}

_TRUTH = "0.45"        # ground truth: gray
_ADAPTIVE = "tab:red"  # adaptive tracker
_FIXED = "tab:blue"    # fixed-noise tracker


class FigureError(Exception):
    """Run-level rendering failure (bad manifest, unreadable run directory)."""


@dataclass(frozen=True)
class FigureManifest:
    """What to render: a run directory, a figure selection, and output format.

    ``figures`` of None means "everything this run kind supports"; an explicit
    empty tuple renders nothing.  Images land in ``<run_dir>/figures/``.
    """

    run_dir: Path
    figures: tuple | None = None
    fmt: str = "svg"
    dpi: int = 150

    def __post_init__(self):
        object.__setattr__(self, "run_dir", Path(self.run_dir))
        if self.figures is not None:
            object.__setattr__(self, "figures", tuple(self.figures))
        if self.fmt not in ("png", "svg"):
            raise FigureError(f"fmt must be 'png' or 'svg', got {self.fmt!r}")
        if self.dpi <= 0:
            raise FigureError(f"dpi must be positive, got {self.dpi!r}")


@dataclass(frozen=True)
class RenderReport:
    """Outcome per requested figure: written (name, path) and failed (name, reason)."""

    written: tuple
    failed: tuple


# ----------------------------------------------------------------------------
# artifact loading
# ----------------------------------------------------------------------------

def _table(path: Path):
    """Structured array from a headered CSV; empty cells become NaN."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None,
                         encoding="utf-8")
    if data.shape == ():
        data = data.reshape(1)
    return data


def _output_table(run_dir: Path):
    """The tracker-output timeseries, whichever runner wrote it."""
    for name in ("filter_output.csv", "track_output.csv"):
        if (run_dir / name).is_file():
            return _table(run_dir / name)
    raise FileNotFoundError("no filter_output.csv or track_output.csv in run")


def _truth_or_none(tab):
    # an entirely empty column is not inferred as floats, so check the kind
    truth = tab["omega_true_rad_s"]
    if truth.dtype.kind != "f" or not np.isfinite(truth).any():
        return None
    return truth


def _finite_truth(tab):
    truth = _truth_or_none(tab)
    if truth is None:
        raise ValueError("run carries no ground-truth frequency column")
    return truth


# ----------------------------------------------------------------------------
# figure builders (run_dir, summary) -> matplotlib Figure
# ----------------------------------------------------------------------------

def _fig_spectrum(run_dir: Path, summary: dict):
    tab = _table(run_dir / "spectrum.csv")
    fit = json.loads((run_dir / "fit.json").read_text(encoding="utf-8"))
    f, psd = tab["f_Hz"], tab["psd_V2_per_Hz"]
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    ax.plot(f, psd, color="0.4", lw=0.7, label="averaged PSD")
    if not fit.get("degenerate"):
        f0, hw = fit["f0_hz"], fit["hwhm_hz"]
        curve = fit["floor_v2_per_hz"] + (fit["amplitude_v2_per_hz"] * hw ** 2
                                          / ((f - f0) ** 2 + hw ** 2))
        ax.plot(f, curve, color=_ADAPTIVE, lw=1.2,
                label=f"fit: {f0:.1f} Hz, hwhm {hw:.1f} Hz")
    else:
        ax.text(0.5, 0.85, "no usable peak", transform=ax.transAxes,
                ha="center", color="0.3")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("PSD (V$^2$/Hz)")
    ax.legend(loc="upper right", fontsize=8)
    return fig


def _fig_timeline(run_dir: Path, summary: dict):
    tab = _output_table(run_dir)
    t, est = tab["t_s"], tab["omega_hat_rad_s"]
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    truth = _truth_or_none(tab)
    if truth is not None:
        ax.plot(t, truth, color=_TRUTH, lw=1.3, label="true")
    band = np.sqrt(tab["p_omega"])
    ax.fill_between(t, est - band, est + band, color=_ADAPTIVE, alpha=0.15,
                    lw=0)
    ax.plot(t, est, color=_ADAPTIVE, lw=0.8, label="estimate")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("angular frequency (rad/s)")
    ax.legend(loc="best", fontsize=8)
    return fig


def _fig_error_cov(run_dir: Path, summary: dict):
    tab = _output_table(run_dir)
    truth = _finite_truth(tab)
    t = tab["t_s"]
    err2 = (truth - tab["omega_hat_rad_s"]) ** 2
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    ax.semilogy(t, np.maximum(err2, 1e-30), color=_ADAPTIVE, lw=0.5,
                alpha=0.8, label="squared error")
    ax.semilogy(t, tab["p_omega"], color="0.1", ls="--", lw=1.1,
                label="estimated variance")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("(rad/s)$^2$")
    ax.legend(loc="best", fontsize=8)
    return fig


def _fig_mse(run_dir: Path, summary: dict):
    tab = _table(run_dir / "sweep.csv")
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    styles = {"ekf": (_FIXED, "o", "fixed noise"),
              "aekf": (_ADAPTIVE, "s", "adaptive")}
    for mode, (color, marker, label) in styles.items():
        sel = tab[tab["mode"] == mode]
        if sel.size == 0:
            continue
        order = np.argsort(sel["r_prime"])
        sel = sel[order]
        ax.errorbar(sel["r_prime"], sel["mse_mean"], yerr=sel["mse_stderr"],
                    color=color, marker=marker, ms=4, lw=1.0, capsize=2,
                    label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("assumed / true measurement-noise ratio")
    ax.set_ylabel("frequency MSE ((rad/s)$^2$)")
    ax.legend(loc="best", fontsize=8)
    return fig


def _jump_time(tab):
    r_true = tab["r_true_V2"]
    changed = np.flatnonzero(r_true != r_true[0])
    return tab["t_s"][changed[0]] if changed.size else None


def _fig_jump(run_dir: Path, summary: dict):
    tab = _table(run_dir / "abrupt_timeseries.csv")
    t = tab["t_s"]
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    ax.plot(t, tab["omega_true_rad_s"], color=_TRUTH, lw=1.3, label="true")
    ax.plot(t, tab["omega_hat_ekf_rad_s"], color=_FIXED, lw=0.7,
            label="fixed noise")
    ax.plot(t, tab["omega_hat_aekf_rad_s"], color=_ADAPTIVE, lw=0.8,
            label="adaptive")
    tj = _jump_time(tab)
    if tj is not None:
        ax.axvline(tj, color="0.25", ls=":", lw=0.9)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("angular frequency (rad/s)")
    ax.legend(loc="best", fontsize=8)
    return fig


def _fig_adapt(run_dir: Path, summary: dict):
    tab = _table(run_dir / "abrupt_timeseries.csv")
    t = tab["t_s"]
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    ax.semilogy(t, tab["r_true_V2"], color=_TRUTH, lw=1.3,
                drawstyle="steps-post", label="true noise variance")
    ax.semilogy(t, tab["r_hat_aekf_V2"], color=_ADAPTIVE, lw=0.8,
                label="windowed estimate")
    tj = _jump_time(tab)
    if tj is not None:
        ax.axvline(tj, color="0.25", ls=":", lw=0.9)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("measurement-noise variance (V$^2$)")
    ax.legend(loc="best", fontsize=8)
    return fig


def _fig_track(run_dir: Path, summary: dict):
    tab = _table(run_dir / "track_output.csv")
    truth = _finite_truth(tab)
    t = tab["t_s"]
    fig, ax = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    ax.plot(t, truth, color=_TRUTH, lw=1.4, label="true")
    ax.plot(t, tab["omega_hat_rad_s"], color=_ADAPTIVE, lw=0.8,
            label="estimate")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("angular frequency (rad/s)")
    ax.legend(loc="best", fontsize=8)
    return fig


def _fig_recon(run_dir: Path, summary: dict):
    tab = _output_table(run_dir)
    gyro = summary["config"]["physics"]["gyro"]
    t, est_nt = tab["t_s"], tab["omega_hat_rad_s"] / gyro
    trace_path = run_dir / "trace.csv"
    if trace_path.is_file():
        raw = _table(trace_path)
        fig, (ax_v, ax_b) = plt.subplots(2, 1, figsize=(6.0, 4.6), sharex=True,
                                         constrained_layout=True)
        ax_v.plot(raw["t_s"], raw["y_V"], color="0.4", lw=0.4)
        ax_v.set_ylabel("detector signal (V)")
    else:
        fig, ax_b = plt.subplots(figsize=(6.0, 3.2), constrained_layout=True)
    truth = _truth_or_none(tab)
    if truth is not None:
        ax_b.plot(t, truth / gyro, color=_TRUTH, lw=1.3, label="true")
    ax_b.plot(t, est_nt, color=_ADAPTIVE, lw=0.8, label="reconstructed")
    ax_b.set_xlabel("time (s)")
    ax_b.set_ylabel("field (nT)")
    ax_b.legend(loc="best", fontsize=8)
    return fig


# ----------------------------------------------------------------------------
# registry and driver
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FigureDef:
    """One renderable figure: canonical name, short alias, and input contract.

    ``wants`` lists the artifact files the builder reads; an entry with ``|``
    accepts any one of the alternatives.  ``kinds`` names the run kinds whose
    artifacts can supply those files (used for default selection).
    """

    name: str
    alias: str
    kinds: tuple
    wants: tuple
    build: Callable
    caption: str


FIGURES = (
    FigureDef("spectrum_fit", "f1b", ("sns",),
              ("spectrum.csv", "fit.json"), _fig_spectrum,
              "averaged noise PSD with fitted peak"),
    FigureDef("estimate_timeline", "f2a", ("filter", "track"),
              ("filter_output.csv|track_output.csv",), _fig_timeline,
              "estimated frequency with uncertainty band"),
    FigureDef("error_vs_covariance", "f2b", ("filter", "track"),
              ("filter_output.csv|track_output.csv",), _fig_error_cov,
              "squared estimation error against reported variance"),
    FigureDef("mse_vs_mismatch", "f2c", ("sweep",),
              ("sweep.csv",), _fig_mse,
              "MSE across the noise-mismatch grid (log-x)"),
    FigureDef("jump_tracking", "f2d", ("abrupt",),
              ("abrupt_timeseries.csv",), _fig_jump,
              "tracking through a mid-run noise jump"),
    FigureDef("noise_adaptation", "f2e", ("abrupt",),
              ("abrupt_timeseries.csv",), _fig_adapt,
              "noise-variance estimate re-converging after the jump"),
    FigureDef("tracking_overlay", "f3", ("track",),
              ("track_output.csv",), _fig_track,
              "true vs estimated frequency for a driven field"),
    FigureDef("reconstruction_nt", "f4", ("filter", "track"),
              ("filter_output.csv|track_output.csv",), _fig_recon,
              "reconstructed field in nT (with raw signal when available)"),
)

_BY_KEY = {d.name: d for d in FIGURES}
_BY_KEY.update({d.alias: d for d in FIGURES})


def _select(manifest: FigureManifest, kind: str):
    if manifest.figures is None:
        return tuple(d for d in FIGURES if kind in d.kinds)
    chosen = []
    for key in manifest.figures:
        if key not in _BY_KEY:
            known = ", ".join(sorted({d.name for d in FIGURES}
                                     | {d.alias for d in FIGURES}))
            raise FigureError(f"unknown figure {key!r}; known: {known}")
        chosen.append(_BY_KEY[key])
    return tuple(chosen)


def _require_inputs(run_dir: Path, wants) -> None:
    for entry in wants:
        options = entry.split("|")
        if not any((run_dir / name).is_file() for name in options):
            raise FileNotFoundError(f"missing input: {entry}")


def _stamp(fig, summary: dict) -> None:
    # every image names the exact configuration it depicts
    fig.text(0.01, 0.006, f"run {summary.get('config_hash', 'unknown')}",
             fontsize=4, color="0.55", family="monospace")


def render_report(manifest: FigureManifest) -> RenderReport:
    """Render the selected figures; isolate per-figure failures.

    Raises FigureError only for run-level problems (no readable summary,
    unknown figure key).  Everything else is recorded per figure.
    """
    summary_path = manifest.run_dir / "summary.json"
    if not summary_path.is_file():
        raise FigureError(f"no summary.json in {manifest.run_dir}")
    try:
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FigureError(f"unreadable summary.json: {exc}") from exc
    chosen = _select(manifest, summary.get("kind", ""))

    out_dir = manifest.run_dir / "figures"
    out_dir.mkdir(parents=True, exist_ok=True)
    written, failed = [], []
    with matplotlib.rc_context(_RC):
        for spec in chosen:
            try:
                _require_inputs(manifest.run_dir, spec.wants)
                fig = spec.build(manifest.run_dir, summary)
                _stamp(fig, summary)
                path = out_dir / f"{spec.name}.{manifest.fmt}"
                metadata = {"Date": None} if manifest.fmt == "svg" else None
                fig.savefig(path, format=manifest.fmt, dpi=manifest.dpi,
                            metadata=metadata)
                plt.close(fig)
                written.append((spec.name, path))
            except Exception as exc:  # one bad figure must not sink the batch
                plt.close("all")
                failed.append((spec.name, f"{type(exc).__name__}: {exc}"))
    return RenderReport(tuple(written), tuple(failed))


def render_all(manifest: FigureManifest) -> list:
    """Render and return the image paths that were written."""
    return [path for _, path in render_report(manifest).written]
