"""Builders for schema-conformant miniature run artifacts.

Kept outside conftest so test modules can import them under a name that stays
unambiguous when this suite is collected alongside other packages' tests.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

RUN_HASH = hashlib.sha256(b"fixture-run").hexdigest()
GYRO = 43.9598


def write_summary(out_dir, kind, results=None):
    doc = {
        "kind": kind,
        "config": {"physics": {"gyro": GYRO, "dt": 1e-3}},
        "config_hash": RUN_HASH,
        "artifacts": {},
        "results": results or {},
    }
    (out_dir / "summary.json").write_text(json.dumps(doc, indent=2,
                                                     sort_keys=True))


def write_output_csv(path, n=200, with_truth=True, dt=1e-3):
    rng = np.random.default_rng(7)
    t = np.arange(n) * dt
    truth = 12000.0 + 800.0 * np.sin(2.0 * math.pi * t)
    est = truth + rng.normal(0.0, 30.0, n)
    p = 900.0 + 100.0 * np.exp(-t * 20.0)
    # .tolist() so repr() writes plain floats, matching the producer's format
    t, truth, est, p = t.tolist(), truth.tolist(), est.tolist(), p.tolist()
    lines = ["t_s,omega_true_rad_s,omega_hat_rad_s,p_omega,innovation_V,r_hat_V2"]
    for k in range(n):
        truth_cell = repr(truth[k]) if with_truth else ""
        lines.append(f"{t[k]!r},{truth_cell},{est[k]!r},{p[k]!r},"
                     f"{float(rng.normal())!r},1.0")
    path.write_text("\n".join(lines) + "\n")
