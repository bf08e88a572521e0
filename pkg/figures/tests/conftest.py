"""Fixture run directories for the renderer tests.

These are handcrafted to the documented artifact layouts rather than produced
by the simulation toolkit, keeping this package's suite self-contained; one
integration test exercises the real producer when its CLI is installed.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from figdata import write_output_csv, write_summary

@pytest.fixture
def sweep_dir(tmp_path):
    out = tmp_path / "sweep_run"
    out.mkdir()
    (out / "sweep.csv").write_text(
        "r_prime,mode,mse_mean,mse_stderr,trials,failures\n"
        "1.0,ekf,3055.0,41.0,20,0\n"
        "1000.0,ekf,93000.0,2100.0,20,0\n"
        "1.0,aekf,3059.0,44.0,20,0\n"
        "1000.0,aekf,3101.0,47.0,20,0\n")
    write_summary(out, "sweep")
    return out


@pytest.fixture
def filter_dir(tmp_path):
    out = tmp_path / "filter_run"
    out.mkdir()
    write_output_csv(out / "filter_output.csv")
    write_summary(out, "filter")
    return out


@pytest.fixture
def abrupt_dir(tmp_path):
    out = tmp_path / "abrupt_run"
    out.mkdir()
    rng = np.random.default_rng(11)
    n, jump = 200, 100
    lines = ["t_s,omega_true_rad_s,omega_hat_ekf_rad_s,omega_hat_aekf_rad_s,"
             "r_hat_aekf_V2,r_true_V2"]
    for k in range(n):
        t = k * 1e-3
        truth = float(12000.0 + 10.0 * rng.normal())
        spread = 30.0 if k < jump else 900.0
        r_true = 1.0 if k < jump else 100.0
        r_hat = 1.0 if k < jump else min(100.0, 1.0 + (k - jump) * 2.0)
        lines.append(f"{t!r},{truth!r},{float(truth + spread * rng.normal())!r},"
                     f"{float(truth + 30.0 * rng.normal())!r},{r_hat!r},{r_true!r}")
    (out / "abrupt_timeseries.csv").write_text("\n".join(lines) + "\n")
    write_summary(out, "abrupt", {"jump_index": jump})
    return out


@pytest.fixture
def track_dir(tmp_path):
    out = tmp_path / "track_run"
    out.mkdir()
    write_output_csv(out / "track_output.csv")
    rng = np.random.default_rng(3)
    trace_lines = ["t_s,y_V,omega_true_rad_s"]
    for k in range(200):
        trace_lines.append(f"{k * 1e-3!r},{float(rng.normal())!r},{12000.0 + k!r}")
    (out / "trace.csv").write_text("\n".join(trace_lines) + "\n")
    write_summary(out, "track")
    return out


@pytest.fixture
def sns_dir(tmp_path):
    out = tmp_path / "sns_run"
    out.mkdir()
    f = np.linspace(0.0, 5000.0, 256)
    psd = 1e-4 + 2e-3 * 300.0 ** 2 / ((f - 2000.0) ** 2 + 300.0 ** 2)
    lines = ["f_Hz,psd_V2_per_Hz"]
    lines += [f"{fi!r},{pi!r}" for fi, pi in zip(f.tolist(), psd.tolist())]
    (out / "spectrum.csv").write_text("\n".join(lines) + "\n")
    (out / "fit.json").write_text(json.dumps({
        "f0_hz": 2000.0, "hwhm_hz": 300.0, "amplitude_v2_per_hz": 2e-3,
        "floor_v2_per_hz": 1e-4, "residual_rms_v2_per_hz": 1e-6,
        "degenerate": False, "sensitivity_nt_per_rthz": 18.6}))
    write_summary(out, "sns")
    return out
