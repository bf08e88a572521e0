"""Scenario runners: mismatch sweeps, abrupt noise changes, field tracking.

Each runner is a pure function of its configuration -- seeds are laddered
from a base value, traces are cached per seed, and artifacts (delimited
per-trial data plus one JSON summary per run) are written with deterministic
formatting, so rerunning a scenario reproduces its output files byte for
byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import (DEFAULT_OMEGA_OFFSET, canonical_hash, filter_model_hash,
                     make_filter_config, nominal_omega)
from .core import NoiseConfig, PhysicsParams
from .errors import InvalidParameter, NumericalFailure
from .fields import FieldModelSpec, field_to_dict
from .filtering import FilterOutput, run_filter, write_filter_csv
from .simulate import Trace, simulate_trace, write_trace_csv


def _burn_in_samples(burn_in_s: float, dt: float) -> int:
    """Number of leading samples excluded by a burn-in of ``burn_in_s``.

    Mathematically ceil(burn_in/dt); evaluated with a small tolerance so that
    an exact integer ratio is not pushed up by float rounding.
    """
    return int(math.ceil(burn_in_s / dt - 1e-9))


def compute_mse(omega_true, omega_hat, dt: float, burn_in_s: float) -> float:
    """Mean squared frequency error, excluding the initial transient.

    Samples with t < burn_in_s (the first ceil(burn_in/dt) of them) are
    dropped before averaging.
    """
    omega_true = np.asarray(omega_true, dtype=float)
    omega_hat = np.asarray(omega_hat, dtype=float)
    if omega_true.shape != omega_hat.shape or omega_true.ndim != 1:
        raise InvalidParameter(
            f"series must be 1-D and equal length, got {omega_true.shape} vs {omega_hat.shape}")
    if dt <= 0:
        raise InvalidParameter(f"dt must be positive, got {dt!r}")
    if burn_in_s < 0:
        raise InvalidParameter(f"burn_in_s must be >= 0, got {burn_in_s!r}")
    skip = _burn_in_samples(burn_in_s, dt)
    if skip >= omega_true.size:
        raise InvalidParameter(
            f"burn-in of {skip} samples leaves nothing of a {omega_true.size}-sample run")
    err = omega_true[skip:] - omega_hat[skip:]
    return float(np.mean(err * err))


def rms_excursion(omega_true, dt: float, burn_in_s: float) -> float:
    """RMS deviation of the true frequency from its own post-burn-in mean."""
    omega_true = np.asarray(omega_true, dtype=float)
    skip = _burn_in_samples(burn_in_s, dt)
    if skip >= omega_true.size:
        raise InvalidParameter("burn-in leaves nothing of the run")
    w = omega_true[skip:]
    return float(np.std(w))


def write_run_summary(out_dir: Path, kind: str, config: dict, artifacts: dict,
                      results: dict) -> Path:
    """Write the per-run ``summary.json`` (deterministic formatting)."""
    return _write_summary(Path(out_dir), kind, config, artifacts, results)


def _write_summary(out_dir: Path, kind: str, config: dict, artifacts: dict,
                   results: dict) -> Path:
    summary = {
        "kind": kind,
        "config": config,
        "config_hash": canonical_hash(config),
        "artifacts": artifacts,
        "results": results,
    }
    path = out_dir / "summary.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ----------------------------------------------------------------------------
# mismatch sweep
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepConfig:
    """Grid of initial-noise mismatch ratios crossed with tracker modes.

    r_prime is the ratio of configured to actual measurement-noise variance;
    every grid point runs ``trials`` independent seeds (seed_base + i).
    """

    physics: PhysicsParams
    noise: NoiseConfig
    field: FieldModelSpec
    r_prime_grid: tuple
    trials: int
    duration_s: float
    burn_in_s: float
    seed_base: int
    modes: tuple = ("ekf", "aekf")
    adapt_convention: str = "standard"
    init_p_omega: float = (2.0 * math.pi * 1000.0) ** 2
    init_omega_offset: float = DEFAULT_OMEGA_OFFSET

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParameter(f"trials must be >= 1, got {self.trials!r}")
        if len(self.r_prime_grid) == 0 or any(r <= 0 for r in self.r_prime_grid):
            raise InvalidParameter("r_prime_grid must be non-empty and positive")
        if self.duration_s <= self.burn_in_s:
            raise InvalidParameter("duration_s must exceed burn_in_s")

    @property
    def steps(self) -> int:
        return int(round(self.duration_s / self.physics.dt))

    def to_dict(self) -> dict:
        return {
            "physics": {"gamma_relax": self.physics.gamma_relax, "g_d": self.physics.g_d,
                        "q_x": self.physics.q_x, "q_z": self.physics.q_z,
                        "dt": self.physics.dt, "gyro": self.physics.gyro},
            "noise": {"r_true": self.noise.r_true, "r_init": self.noise.r_init,
                      "alpha": self.noise.alpha, "adapt_window": self.noise.adapt_window,
                      "r_floor": self.noise.r_floor},
            "field": field_to_dict(self.field),
            "r_prime_grid": list(self.r_prime_grid),
            "trials": self.trials,
            "duration_s": self.duration_s,
            "burn_in_s": self.burn_in_s,
            "seed_base": self.seed_base,
            "modes": list(self.modes),
            "adapt_convention": self.adapt_convention,
            "init_p_omega": self.init_p_omega,
            "init_omega_offset": self.init_omega_offset,
        }


@dataclass(frozen=True)
class SweepRow:
    r_prime: float
    mode: str
    mse_mean: float
    mse_stderr: float
    trials: int
    failures: int


@dataclass(frozen=True, eq=False)
class SweepSummary:
    rows: tuple
    per_trial: tuple  # of (r_prime, mode, seed, mse)

    def row(self, r_prime: float, mode: str) -> SweepRow:
        for r in self.rows:
            if r.mode == mode and math.isclose(r.r_prime, r_prime):
                return r
        raise KeyError(f"no row for r_prime={r_prime!r}, mode={mode!r}")


def run_mse_sweep(cfg: SweepConfig, out_dir=None) -> SweepSummary:
    """Cross r_prime_grid with tracker modes over a ladder of seeds.

    The simulated trace for seed i is identical at every grid point (the
    mismatch lives solely in the tracker's configured r_init), so differences
    along the grid are paired, not resampled.  Trials that abort with
    :class:`NumericalFailure` are excluded from the averages and counted in
    ``failures``.
    """
    traces = [
        simulate_trace(cfg.physics, cfg.noise, cfg.field, cfg.steps, cfg.seed_base + i)
        for i in range(cfg.trials)
    ]
    rows = []
    per_trial = []
    for r_prime in cfg.r_prime_grid:
        r_init = r_prime * cfg.noise.r_true
        for mode in cfg.modes:
            fcfg = make_filter_config(
                cfg.physics, cfg.noise, cfg.field, mode,
                adapt_convention=cfg.adapt_convention,
                init_p_omega=cfg.init_p_omega, r_init=r_init,
                omega_offset=cfg.init_omega_offset)
            mses = []
            failures = 0
            for i, trace in enumerate(traces):
                try:
                    out = run_filter(trace, fcfg)
                except NumericalFailure:
                    failures += 1
                    continue
                mse = compute_mse(trace.omega_true, out.omega_hat,
                                  cfg.physics.dt, cfg.burn_in_s)
                mses.append(mse)
                per_trial.append((r_prime, mode, cfg.seed_base + i, mse))
            if mses:
                arr = np.asarray(mses)
                mean = float(arr.mean())
                stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
            else:
                mean = math.nan
                stderr = math.nan
            rows.append(SweepRow(float(r_prime), mode, mean, stderr,
                                 len(mses), failures))

    summary = SweepSummary(tuple(rows), tuple(per_trial))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("r_prime,mode,mse_mean,mse_stderr,trials,failures\n")
            for r in rows:
                fh.write(f"{r.r_prime!r},{r.mode},{r.mse_mean!r},{r.mse_stderr!r},"
                         f"{r.trials},{r.failures}\n")
        with open(out_dir / "sweep_trials.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("r_prime,mode,seed,mse\n")
            for r_prime, mode, seed, mse in per_trial:
                fh.write(f"{r_prime!r},{mode},{seed},{mse!r}\n")
        _write_summary(
            out_dir, "sweep", cfg.to_dict(),
            {"sweep": "sweep.csv", "trials": "sweep_trials.csv"},
            {"rows": [{"r_prime": r.r_prime, "mode": r.mode, "mse_mean": r.mse_mean,
                       "mse_stderr": r.mse_stderr, "trials": r.trials,
                       "failures": r.failures} for r in rows]})
    return summary


# ----------------------------------------------------------------------------
# abrupt measurement-noise change
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AbruptConfig:
    """Mid-run jump of the actual measurement-noise variance."""

    physics: PhysicsParams
    noise: NoiseConfig
    field: FieldModelSpec
    duration_s: float
    burn_in_s: float
    jump_time_s: float
    jump_factor: float
    seeds: int
    seed_base: int
    adapt_convention: str = "standard"
    init_p_omega: float = (2.0 * math.pi * 1000.0) ** 2
    init_omega_offset: float = DEFAULT_OMEGA_OFFSET

    def __post_init__(self):
        if not (0.0 < self.jump_time_s < self.duration_s):
            raise InvalidParameter(
                f"jump_time_s must fall inside the run, got {self.jump_time_s!r}")
        if self.jump_factor <= 0:
            raise InvalidParameter(f"jump_factor must be positive, got {self.jump_factor!r}")
        if self.seeds < 1:
            raise InvalidParameter(f"seeds must be >= 1, got {self.seeds!r}")

    @property
    def steps(self) -> int:
        return int(round(self.duration_s / self.physics.dt))

    @property
    def jump_index(self) -> int:
        return int(math.ceil(self.jump_time_s / self.physics.dt - 1e-9))

    def to_dict(self) -> dict:
        return {
            "physics": {"gamma_relax": self.physics.gamma_relax, "g_d": self.physics.g_d,
                        "q_x": self.physics.q_x, "q_z": self.physics.q_z,
                        "dt": self.physics.dt, "gyro": self.physics.gyro},
            "noise": {"r_true": self.noise.r_true, "r_init": self.noise.r_init,
                      "alpha": self.noise.alpha, "adapt_window": self.noise.adapt_window,
                      "r_floor": self.noise.r_floor},
            "field": field_to_dict(self.field),
            "duration_s": self.duration_s,
            "burn_in_s": self.burn_in_s,
            "jump_time_s": self.jump_time_s,
            "jump_factor": self.jump_factor,
            "seeds": self.seeds,
            "seed_base": self.seed_base,
            "adapt_convention": self.adapt_convention,
            "init_p_omega": self.init_p_omega,
            "init_omega_offset": self.init_omega_offset,
        }


@dataclass(frozen=True, eq=False)
class AbruptResult:
    """Per-seed and aggregate outcomes of the jump scenario.

    The r_hat readout is taken ``2 * adapt_window`` samples after the jump
    (or at the last sample if the run ends sooner).
    """

    jump_index: int
    deadline_index: int
    r_true_post: float
    mse_pre: dict      # mode -> per-seed array
    mse_post: dict
    r_hat_deadline: np.ndarray
    mse_pre_mean: dict
    mse_post_mean: dict
    r_hat_deadline_mean: float


def run_abrupt_noise_scenario(cfg: AbruptConfig, out_dir=None) -> AbruptResult:
    """Simulate the noise jump and compare both tracker modes across seeds.

    Pre-jump error is averaged over t in [burn_in, jump); post-jump error over
    t >= jump + burn_in, giving each segment its own settling allowance.
    """
    dt = cfg.physics.dt
    steps = cfg.steps
    jump_idx = cfg.jump_index
    guard = _burn_in_samples(cfg.burn_in_s, dt)
    pre = slice(guard, jump_idx)
    post = slice(jump_idx + guard, steps)
    if pre.stop <= pre.start or post.stop <= post.start:
        raise InvalidParameter("burn-in leaves an empty pre- or post-jump segment")
    deadline = min(jump_idx + 2 * cfg.noise.adapt_window, steps - 1)

    mse_pre = {"ekf": [], "aekf": []}
    mse_post = {"ekf": [], "aekf": []}
    r_hat_deadline = []
    first_trace = None
    first_out = {}
    for i in range(cfg.seeds):
        trace = simulate_trace(
            cfg.physics, cfg.noise, cfg.field, steps, cfg.seed_base + i,
            r_jump_time_s=cfg.jump_time_s, r_jump_factor=cfg.jump_factor)
        for mode in ("ekf", "aekf"):
            fcfg = make_filter_config(
                cfg.physics, cfg.noise, cfg.field, mode,
                adapt_convention=cfg.adapt_convention,
                init_p_omega=cfg.init_p_omega,
                omega_offset=cfg.init_omega_offset)
            out = run_filter(trace, fcfg)
            err = trace.omega_true - out.omega_hat
            mse_pre[mode].append(float(np.mean(err[pre] ** 2)))
            mse_post[mode].append(float(np.mean(err[post] ** 2)))
            if mode == "aekf":
                r_hat_deadline.append(float(out.r_hat[deadline]))
            if i == 0:
                first_out[mode] = out
        if i == 0:
            first_trace = trace

    result = AbruptResult(
        jump_index=jump_idx,
        deadline_index=deadline,
        r_true_post=cfg.noise.r_true * cfg.jump_factor,
        mse_pre={m: np.asarray(v) for m, v in mse_pre.items()},
        mse_post={m: np.asarray(v) for m, v in mse_post.items()},
        r_hat_deadline=np.asarray(r_hat_deadline),
        mse_pre_mean={m: float(np.mean(v)) for m, v in mse_pre.items()},
        mse_post_mean={m: float(np.mean(v)) for m, v in mse_post.items()},
        r_hat_deadline_mean=float(np.mean(r_hat_deadline)),
    )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        t = first_trace.t.tolist()
        w_true = first_trace.omega_true.tolist()
        w_ekf = first_out["ekf"].omega_hat.tolist()
        w_aekf = first_out["aekf"].omega_hat.tolist()
        r_aekf = first_out["aekf"].r_hat.tolist()
        with open(out_dir / "abrupt_timeseries.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("t_s,omega_true_rad_s,omega_hat_ekf_rad_s,omega_hat_aekf_rad_s,"
                     "r_hat_aekf_V2,r_true_V2\n")
            for k in range(steps):
                r_true_k = cfg.noise.r_true * (cfg.jump_factor if k >= jump_idx else 1.0)
                fh.write(f"{t[k]!r},{w_true[k]!r},{w_ekf[k]!r},{w_aekf[k]!r},"
                         f"{r_aekf[k]!r},{r_true_k!r}\n")
        with open(out_dir / "abrupt_trials.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("seed,mse_pre_ekf,mse_post_ekf,mse_pre_aekf,mse_post_aekf,"
                     "r_hat_deadline_V2\n")
            for i in range(cfg.seeds):
                fh.write(f"{cfg.seed_base + i},{result.mse_pre['ekf'][i]!r},"
                         f"{result.mse_post['ekf'][i]!r},{result.mse_pre['aekf'][i]!r},"
                         f"{result.mse_post['aekf'][i]!r},{result.r_hat_deadline[i]!r}\n")
        _write_summary(
            out_dir, "abrupt", cfg.to_dict(),
            {"timeseries": "abrupt_timeseries.csv", "trials": "abrupt_trials.csv"},
            {"jump_index": jump_idx,
             "deadline_index": deadline,
             "r_true_post": result.r_true_post,
             "r_hat_deadline_mean": result.r_hat_deadline_mean,
             "mse_pre_mean": result.mse_pre_mean,
             "mse_post_mean": result.mse_post_mean})
    return result


# ----------------------------------------------------------------------------
# field tracking
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrackConfig:
    """Single-trace tracking run under an arbitrary field model."""

    physics: PhysicsParams
    noise: NoiseConfig
    field: FieldModelSpec
    duration_s: float
    burn_in_s: float
    seed: int
    mode: str = "aekf"
    adapt_convention: str = "standard"
    init_p_omega: float = (2.0 * math.pi * 1000.0) ** 2
    init_omega_offset: float = DEFAULT_OMEGA_OFFSET

    @property
    def steps(self) -> int:
        return int(round(self.duration_s / self.physics.dt))

    def to_dict(self) -> dict:
        return {
            "physics": {"gamma_relax": self.physics.gamma_relax, "g_d": self.physics.g_d,
                        "q_x": self.physics.q_x, "q_z": self.physics.q_z,
                        "dt": self.physics.dt, "gyro": self.physics.gyro},
            "noise": {"r_true": self.noise.r_true, "r_init": self.noise.r_init,
                      "alpha": self.noise.alpha, "adapt_window": self.noise.adapt_window,
                      "r_floor": self.noise.r_floor},
            "field": field_to_dict(self.field),
            "duration_s": self.duration_s,
            "burn_in_s": self.burn_in_s,
            "seed": self.seed,
            "mode": self.mode,
            "adapt_convention": self.adapt_convention,
            "init_p_omega": self.init_p_omega,
            "init_omega_offset": self.init_omega_offset,
        }


@dataclass(frozen=True, eq=False)
class TrackResult:
    trace: Trace
    output: FilterOutput
    mse: float
    rms_error: float
    excursion_rms: float
    model_hash: str


def run_tracking_scenario(cfg: TrackConfig, out_dir=None) -> TrackResult:
    """Track one realization of the configured field and score the fit.

    The tracker configuration never depends on the field model (beyond the
    initial nominal frequency); ``model_hash`` certifies that, so runs over
    different field types can be shown to use the identical state equation.
    """
    trace = simulate_trace(cfg.physics, cfg.noise, cfg.field, cfg.steps, cfg.seed)
    fcfg = make_filter_config(
        cfg.physics, cfg.noise, cfg.field, cfg.mode,
        adapt_convention=cfg.adapt_convention, init_p_omega=cfg.init_p_omega,
        omega_offset=cfg.init_omega_offset)
    out = run_filter(trace, fcfg)
    mse = compute_mse(trace.omega_true, out.omega_hat, cfg.physics.dt, cfg.burn_in_s)
    excursion = rms_excursion(trace.omega_true, cfg.physics.dt, cfg.burn_in_s)
    result = TrackResult(
        trace=trace, output=out, mse=mse, rms_error=math.sqrt(mse),
        excursion_rms=excursion, model_hash=filter_model_hash(fcfg))

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_filter_csv(out, trace, out_dir / "track_output.csv")
        write_trace_csv(trace, out_dir / "trace.csv")
        _write_summary(
            out_dir, "track", cfg.to_dict(),
            {"track": "track_output.csv", "trace": "trace.csv"},
            {"mse": mse, "rms_error": result.rms_error,
             "excursion_rms": excursion,
             "error_to_excursion": (result.rms_error / excursion
                                    if excursion > 0 else None),
             "filter_model_hash": result.model_hash,
             "field_kind": field_to_dict(cfg.field)["kind"]})
    return result
