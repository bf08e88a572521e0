"""Command-line entry point.

Every subcommand reads the same configuration document (profile defaults,
optional JSON file, explicit flags), writes its delimited artifacts plus a
``summary.json`` into the output directory, and prints a short human-readable
report.  On any anticipated failure a single JSON error object goes to stderr
and the exit status is 2; unexpected exceptions propagate normally.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments, filtering, spectrum
from .config import (RunConfig, config_to_dict, filter_model_hash, load_config,
                     tracking_alpha, tracking_field)
from .core import NoiseConfig
from .errors import SpintrackError
from .experiments import write_run_summary
from .filtering import run_filter
from .ingest import IngestSpec, load_trace_csv
from .simulate import simulate_trace, write_trace_csv

_TRACK_FIELDS = ("config", "constant", "random_walk", "ou", "piecewise", "burst", "drift")


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", type=Path, default=None,
                     help="JSON configuration document")
    sub.add_argument("--out-dir", type=Path, default=None,
                     help="artifact directory (default runs/<command>)")
    sub.add_argument("--seed", type=int, default=None, help="override base seed")
    sub.add_argument("--trials", type=int, default=None, help="override trial count")
    sub.add_argument("--profile", choices=("test", "full"), default=None,
                     help="parameter profile (default: test)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spintrack",
        description="Simulate spin-noise traces and track the magnetic field "
                    "through them with an adaptive Kalman filter.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="generate a synthetic detector trace")
    _add_common(p)

    p = subs.add_parser("filter", help="run the tracker over a trace")
    _add_common(p)
    p.add_argument("--trace", type=Path, default=None,
                   help="existing trace CSV (default: simulate per config)")
    p.add_argument("--mode", choices=("ekf", "aekf"), default=None,
                   help="override tracker mode")

    p = subs.add_parser("sweep", help="MSE vs initial noise mismatch, both modes")
    _add_common(p)

    p = subs.add_parser("abrupt", help="mid-run measurement-noise jump scenario")
    _add_common(p)

    p = subs.add_parser("track", help="track one realization of a field model")
    _add_common(p)
    p.add_argument("--field", choices=_TRACK_FIELDS, default="config",
                   help="canned field model to track (default: from config)")

    p = subs.add_parser("sns", help="averaged periodogram and Lorentzian fit")
    _add_common(p)
    p.add_argument("--trace", type=Path, default=None,
                   help="existing trace CSV (default: simulate per config)")

    p = subs.add_parser("ingest", help="validate and normalize a measured trace")
    _add_common(p)
    p.add_argument("--trace", type=Path, required=True, help="input CSV")
    p.add_argument("--time-col", default="t_s")
    p.add_argument("--voltage-col", default="y_V")
    p.add_argument("--reference-col", default="omega_true_rad_s",
                   help="'none' to ignore any reference column")
    p.add_argument("--voltage-scale", type=float, default=1.0)
    p.add_argument("--expected-fs", type=float, default=None)
    return parser


def _resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config, profile=args.profile, seed=args.seed,
                      trials=args.trials)
    out_dir = args.out_dir if args.out_dir is not None else Path("runs") / args.command
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def _load_or_simulate(cfg: RunConfig, trace_path):
    if trace_path is None:
        return simulate_trace(cfg.physics, cfg.noise, cfg.field, cfg.steps, cfg.seed)
    return load_trace_csv(IngestSpec(path=trace_path))


def _cmd_simulate(args) -> int:
    cfg, out_dir = _resolve(args)
    trace = simulate_trace(cfg.physics, cfg.noise, cfg.field, cfg.steps, cfg.seed)
    write_trace_csv(trace, out_dir / "trace.csv")
    write_run_summary(out_dir, "simulate", config_to_dict(cfg),
                      {"trace": "trace.csv"},
                      {"steps": cfg.steps, "fs": cfg.physics.fs,
                       "duration_s": cfg.duration_s})
    print(f"simulated {cfg.steps} samples at {cfg.physics.fs:g} Sa/s -> {out_dir}")
    return 0


def _cmd_filter(args) -> int:
    cfg, out_dir = _resolve(args)
    trace = _load_or_simulate(cfg, args.trace)
    fcfg = cfg.filter_config(mode=args.mode)
    out = run_filter(trace, fcfg)
    filtering.write_filter_csv(out, trace, out_dir / "filter_output.csv")
    results = {
        "mode": fcfg.mode,
        "filter_model_hash": filter_model_hash(fcfg),
        "r_hat_final": float(out.r_hat[-1]),
    }
    if trace.omega_true is not None:
        results["mse"] = experiments.compute_mse(
            trace.omega_true, out.omega_hat, trace.dt, cfg.burn_in_s)
    write_run_summary(out_dir, "filter", config_to_dict(cfg),
                      {"filter": "filter_output.csv"}, results)
    msg = f"tracked {trace.y.size} samples in {fcfg.mode} mode"
    if "mse" in results:
        msg += f", mse {results['mse']:.4g} (rad/s)^2"
    print(msg + f" -> {out_dir}")
    return 0


def _cmd_sweep(args) -> int:
    cfg, out_dir = _resolve(args)
    scfg = experiments.SweepConfig(
        physics=cfg.physics, noise=cfg.noise, field=cfg.field,
        r_prime_grid=cfg.r_prime_grid, trials=cfg.trials,
        duration_s=cfg.duration_s, burn_in_s=cfg.burn_in_s,
        seed_base=cfg.seed, adapt_convention=cfg.adapt_convention,
        init_p_omega=cfg.init_p_omega, init_omega_offset=cfg.init_omega_offset)
    summary = experiments.run_mse_sweep(scfg, out_dir)
    for row in summary.rows:
        print(f"r'={row.r_prime:<8g} {row.mode:<4} mse {row.mse_mean:.4g} "
              f"+/- {row.mse_stderr:.2g} ({row.trials} trials, {row.failures} failures)")
    print(f"-> {out_dir}")
    return 0


def _cmd_abrupt(args) -> int:
    cfg, out_dir = _resolve(args)
    acfg = experiments.AbruptConfig(
        physics=cfg.physics, noise=cfg.noise, field=cfg.field,
        duration_s=cfg.duration_s, burn_in_s=cfg.burn_in_s,
        jump_time_s=cfg.jump_time_s, jump_factor=cfg.jump_factor,
        seeds=cfg.trials, seed_base=cfg.seed,
        adapt_convention=cfg.adapt_convention, init_p_omega=cfg.init_p_omega,
        init_omega_offset=cfg.init_omega_offset)
    res = experiments.run_abrupt_noise_scenario(acfg, out_dir)
    print(f"noise x{cfg.jump_factor:g} at t={cfg.jump_time_s:g}s; "
          f"adapted r TO {res.r_hat_deadline_mean:.4g} V^2 "
          f"(target {res.r_true_post:g}) within {2 * cfg.noise.adapt_window} samples")
    print(f"post-jump mse: ekf {res.mse_post_mean['ekf']:.4g}, "
          f"aekf {res.mse_post_mean['aekf']:.4g} -> {out_dir}")
    return 0


def _cmd_track(args) -> int:
    cfg, out_dir = _resolve(args)
    field, noise = cfg.field, cfg.noise
    kind = args.field if args.field != "config" else None
    if kind is None and args.config is None:
        # bare `spintrack track` runs the canned scenario from the defaults
        kind = cfg.track["field_kind"]
    if kind is not None:
        field = tracking_field(
            kind, cfg.track["omega0"], cfg.duration_s,
            ou_theta=cfg.track["ou_theta"], ou_std=cfg.track["ou_std"],
            staircase_step=cfg.track["staircase_step"])
        alpha = tracking_alpha(kind, cfg.track["alpha"], cfg.noise.alpha)
        noise = NoiseConfig(cfg.noise.r_true, cfg.noise.r_init, alpha,
                            cfg.noise.adapt_window, cfg.noise.r_floor)
    tcfg = experiments.TrackConfig(
        physics=cfg.physics, noise=noise, field=field,
        duration_s=cfg.duration_s, burn_in_s=cfg.burn_in_s, seed=cfg.seed,
        mode=cfg.mode, adapt_convention=cfg.adapt_convention,
        init_p_omega=cfg.init_p_omega, init_omega_offset=cfg.init_omega_offset)
    res = experiments.run_tracking_scenario(tcfg, out_dir)
    ratio = res.rms_error / res.excursion_rms if res.excursion_rms > 0 else float("nan")
    print(f"rms error {res.rms_error:.4g} rad/s over excursion "
          f"{res.excursion_rms:.4g} rad/s (ratio {ratio:.3f}) -> {out_dir}")
    return 0


def _cmd_sns(args) -> int:
    cfg, out_dir = _resolve(args)
    trace = _load_or_simulate(cfg, args.trace)
    spec = spectrum.welch_psd(trace.y, trace.fs, cfg.sns_segment_len, cfg.sns_overlap)
    spectrum.write_spectrum_csv(spec, out_dir / "spectrum.csv")
    fit = spectrum.fit_lorentzian(spec)
    report = spectrum.fit_report(fit, cfg.physics.gyro)
    with open(out_dir / "fit.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_run_summary(out_dir, "sns", config_to_dict(cfg),
                      {"spectrum": "spectrum.csv", "fit": "fit.json"}, report)
    if fit.degenerate:
        print(f"no usable peak (degenerate fit) -> {out_dir}")
    else:
        print(f"peak {report['f0_hz']:.6g} Hz, hwhm {report['hwhm_hz']:.4g} Hz, "
              f"sensitivity {report['sensitivity_nt_per_rthz']:.4g} nT/rtHz -> {out_dir}")
    return 0


def _cmd_ingest(args) -> int:
    cfg, out_dir = _resolve(args)
    ref = None if args.reference_col == "none" else args.reference_col
    spec = IngestSpec(path=args.trace, time_col=args.time_col,
                      voltage_col=args.voltage_col, reference_col=ref,
                      voltage_scale=args.voltage_scale,
                      expected_fs=args.expected_fs)
    trace = load_trace_csv(spec)
    write_trace_csv(trace, out_dir / "trace.csv")
    write_run_summary(out_dir, "ingest", config_to_dict(cfg),
                      {"trace": "trace.csv"},
                      {"rows": int(trace.y.size),
                       "inferred_fs": trace.meta["inferred_fs"],
                       "has_reference": trace.omega_true is not None,
                       "source": str(args.trace)})
    print(f"ingested {trace.y.size} samples at {trace.meta['inferred_fs']:.6g} Sa/s "
          f"-> {out_dir}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "filter": _cmd_filter,
    "sweep": _cmd_sweep,
    "abrupt": _cmd_abrupt,
    "track": _cmd_track,
    "sns": _cmd_sns,
    "ingest": _cmd_ingest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SpintrackError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        step = getattr(exc, "step", None)
        if step is not None:
            payload["step"] = step
        line = getattr(exc, "line", None)
        if line is not None:
            payload["line"] = line
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 2
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
