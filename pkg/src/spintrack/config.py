"""Run configuration: one JSON document drives every entry point.

A configuration resolves in three layers: profile defaults ("test" for quick
desk-scale runs, "full" for the long high-rate setting), then the user's JSON
file, then explicit command-line overrides.  The resolved document is hashed
(sha256 over a canonical serialization) so artifacts can state exactly which
configuration produced them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import DEFAULT_GYRO, NoiseConfig, PhysicsParams, StateVector
from .errors import InvalidParameter
from .fields import FieldModelSpec, field_from_dict, field_to_dict
from .filtering import FilterConfig

TWO_PI = 2.0 * math.pi

# Default displacement of the tracker's starting frequency from the field's
# nominal value.  Starting exactly on target would let an over-smoothed
# (large-r) tracker look artificially good over a short run: it could simply
# hold its initial value.  A 2*pi*100 rad/s offset is well inside the wide
# default prior (std 2*pi*1000), i.e. "known to about a percent, not better".
DEFAULT_OMEGA_OFFSET = TWO_PI * 100.0

# Profile defaults.  "test" is sized so the whole scenario battery runs in
# seconds; "full" matches the long-form acquisition setting.
PROFILES = {
    "test": {
        "fs": 20_000.0,
        "duration_s": 2.0,
        "trials": 20,
        "jump_time_s": 1.0,
    },
    "full": {
        "fs": 200_000.0,
        "duration_s": 5.0,
        "trials": 50,
        "jump_time_s": 2.5,
    },
}

_BASE = {
    "profile": "test",
    "physics": {
        "gamma_relax": TWO_PI * 300.0,   # 1/s
        "g_d": 1.0,                      # V per spin unit
        "q_x": 1.0,
        "q_z": 1.0,
        "gyro": DEFAULT_GYRO,
    },
    "noise": {
        "r_true": 1.0,                   # V^2 per sample
        "r_init": 1.0,
        "alpha": 0.1,                    # (rad/s)^2 per step
        "adapt_window": 200,
        "r_floor": 1e-9,
    },
    "field": {
        "kind": "random_walk",
        "omega0": TWO_PI * 2000.0,       # rad/s
        "sigma2": 0.1,                   # (rad/s)^2 per step
    },
    "burn_in_s": 0.1,
    "seed": 20260823,
    "mode": "aekf",
    "adapt_convention": "standard",
    "r_prime_grid": [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
    "jump_factor": 100.0,
    "sns": {"segment_len": 4096, "overlap": 0.5},
    "init": {
        "p_spin": None,                  # None -> q_x / q_z
        "p_omega": (TWO_PI * 1000.0) ** 2,
        "omega_offset": DEFAULT_OMEGA_OFFSET,
    },
    # Canned tracking-scenario drive.  The excursions are deliberately large
    # (thousands of rad/s): the frequency error floor of the tracker is set by
    # the spin linewidth, roughly sqrt(2*gamma_relax/averaging time), so a
    # demonstrably tracked drive has to move well above that floor.  "alpha"
    # null means "use the per-kind default" (see tracking_alpha).
    "track": {
        "field_kind": "ou",
        "omega0": TWO_PI * 4000.0,
        "ou_theta": 1.0,
        "ou_std": 9000.0,
        "staircase_step": 3600.0,
        "alpha": None,
    },
}

_TOP_KEYS = set(_BASE) | {"fs", "duration_s", "trials", "jump_time_s"}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Fully resolved configuration for one run (any subcommand)."""

    profile: str
    physics: PhysicsParams
    noise: NoiseConfig
    field: FieldModelSpec
    duration_s: float
    burn_in_s: float
    seed: int
    trials: int
    mode: str
    adapt_convention: str
    r_prime_grid: tuple
    jump_time_s: float
    jump_factor: float
    sns_segment_len: int
    sns_overlap: float
    init_p_omega: float
    init_omega_offset: float
    track: dict
    raw: dict

    @property
    def steps(self) -> int:
        return int(round(self.duration_s / self.physics.dt))

    def filter_config(self, mode: str | None = None,
                      r_init: float | None = None,
                      omega_nominal: float | None = None) -> FilterConfig:
        """Build the tracker configuration implied by this run."""
        return make_filter_config(
            self.physics, self.noise, self.field,
            mode if mode is not None else self.mode,
            adapt_convention=self.adapt_convention,
            init_p_omega=self.init_p_omega,
            r_init=r_init, omega_nominal=omega_nominal,
            omega_offset=self.init_omega_offset)


def make_filter_config(physics: PhysicsParams, noise: NoiseConfig,
                       field: FieldModelSpec, mode: str,
                       adapt_convention: str = "standard",
                       init_p_omega: float = (TWO_PI * 1000.0) ** 2,
                       r_init: float | None = None,
                       omega_nominal: float | None = None,
                       omega_offset: float = 0.0) -> FilterConfig:
    """Standard tracker setup for a run under ``field``.

    The prior mean starts at zero spin and the field model's nominal frequency
    displaced by ``omega_offset`` (a deliberately imperfect starting guess; an
    explicit ``omega_nominal`` is used verbatim).  The prior covariance is the
    stationary spin variance plus a wide frequency variance.  ``r_init``
    overrides the configured starting noise variance, e.g. for mismatch
    sweeps.
    """
    import numpy as np

    if r_init is not None:
        noise = NoiseConfig(noise.r_true, r_init, noise.alpha,
                            noise.adapt_window, noise.r_floor)
    if omega_nominal is None:
        omega_nominal = nominal_omega(field, physics.gyro) + omega_offset
    init_cov = np.diag([physics.q_x, physics.q_z, init_p_omega])
    return FilterConfig(
        mode=mode, physics=physics, noise=noise,
        init_state=StateVector(0.0, 0.0, omega_nominal),
        init_cov=init_cov, adapt_convention=adapt_convention)


def nominal_omega(field: FieldModelSpec, gyro: float = DEFAULT_GYRO) -> float:
    """The frequency a run under ``field`` is expected to start near."""
    from .fields import (ConstantField, OrnsteinUhlenbeckField, PiecewiseField,
                         RandomWalkField, WaveformField)

    if isinstance(field, (ConstantField, RandomWalkField, OrnsteinUhlenbeckField)):
        return float(field.omega0)
    if isinstance(field, PiecewiseField):
        return float(field.segments[0][1])
    if isinstance(field, WaveformField):
        # stored waveforms carry the total field in nT, bias included
        return float(field.b_nt[0] * gyro)
    raise InvalidParameter(f"unknown field model {field!r}")


def _deep_update(base: dict, override: dict, context: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{context}.{key}" if context else key
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value, where)
        else:
            out[key] = value
    return out


def resolve_config(document: dict | None = None, profile: str | None = None,
                   seed: int | None = None, trials: int | None = None) -> RunConfig:
    """Merge profile defaults, a user document, and CLI overrides.

    Unknown top-level keys are rejected so typos fail loudly.
    """
    document = dict(document or {})
    unknown = set(document) - _TOP_KEYS
    if unknown:
        raise InvalidParameter(f"unknown configuration keys: {sorted(unknown)}")

    prof_name = profile or document.get("profile") or _BASE["profile"]
    if prof_name not in PROFILES:
        raise InvalidParameter(
            f"profile must be one of {sorted(PROFILES)}, got {prof_name!r}")
    prof = PROFILES[prof_name]

    merged = _deep_update(_BASE, {
        "profile": prof_name,
        "fs": prof["fs"],
        "duration_s": prof["duration_s"],
        "trials": prof["trials"],
        "jump_time_s": prof["jump_time_s"],
    })
    merged = _deep_update(merged, document)
    if profile is not None:
        merged["profile"] = profile
    if seed is not None:
        merged["seed"] = int(seed)
    if trials is not None:
        merged["trials"] = int(trials)

    phys_doc = dict(merged["physics"])
    dt = phys_doc.pop("dt", None)
    if dt is None:
        dt = 1.0 / float(merged["fs"])
    physics = PhysicsParams(dt=float(dt), **phys_doc)
    noise = NoiseConfig(**merged["noise"])
    field = field_from_dict(merged["field"])
    init = merged.get("init", {})

    cfg = RunConfig(
        profile=merged["profile"],
        physics=physics,
        noise=noise,
        field=field,
        duration_s=float(merged["duration_s"]),
        burn_in_s=float(merged["burn_in_s"]),
        seed=int(merged["seed"]),
        trials=int(merged["trials"]),
        mode=merged["mode"],
        adapt_convention=merged["adapt_convention"],
        r_prime_grid=tuple(float(r) for r in merged["r_prime_grid"]),
        jump_time_s=float(merged["jump_time_s"]),
        jump_factor=float(merged["jump_factor"]),
        sns_segment_len=int(merged["sns"]["segment_len"]),
        sns_overlap=float(merged["sns"]["overlap"]),
        init_p_omega=float(init.get("p_omega") or _BASE["init"]["p_omega"]),
        init_omega_offset=float(init.get("omega_offset", DEFAULT_OMEGA_OFFSET)),
        track=dict(merged["track"]),
        raw=merged,
    )
    if cfg.duration_s <= 0:
        raise InvalidParameter(f"duration_s must be positive, got {cfg.duration_s!r}")
    if cfg.burn_in_s < 0:
        raise InvalidParameter(f"burn_in_s must be >= 0, got {cfg.burn_in_s!r}")
    if cfg.trials < 1:
        raise InvalidParameter(f"trials must be >= 1, got {cfg.trials!r}")
    if len(cfg.r_prime_grid) == 0 or any(r <= 0 for r in cfg.r_prime_grid):
        raise InvalidParameter("r_prime_grid must be non-empty and positive")
    return cfg


def load_config(path, profile: str | None = None, seed: int | None = None,
                trials: int | None = None) -> RunConfig:
    """Read a JSON document and resolve it (``path`` may be None for defaults)."""
    document = None
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameter(f"configuration is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise InvalidParameter("configuration root must be a JSON object")
    return resolve_config(document, profile=profile, seed=seed, trials=trials)


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical, JSON-compatible view of a resolved configuration."""
    return {
        "profile": cfg.profile,
        "physics": {
            "gamma_relax": cfg.physics.gamma_relax, "g_d": cfg.physics.g_d,
            "q_x": cfg.physics.q_x, "q_z": cfg.physics.q_z,
            "dt": cfg.physics.dt, "gyro": cfg.physics.gyro,
        },
        "noise": {
            "r_true": cfg.noise.r_true, "r_init": cfg.noise.r_init,
            "alpha": cfg.noise.alpha, "adapt_window": cfg.noise.adapt_window,
            "r_floor": cfg.noise.r_floor,
        },
        "field": field_to_dict(cfg.field),
        "duration_s": cfg.duration_s,
        "burn_in_s": cfg.burn_in_s,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "mode": cfg.mode,
        "adapt_convention": cfg.adapt_convention,
        "r_prime_grid": list(cfg.r_prime_grid),
        "jump_time_s": cfg.jump_time_s,
        "jump_factor": cfg.jump_factor,
        "sns": {"segment_len": cfg.sns_segment_len, "overlap": cfg.sns_overlap},
        "init": {"p_omega": cfg.init_p_omega,
                 "omega_offset": cfg.init_omega_offset},
        "track": cfg.track,
    }


def canonical_hash(obj) -> str:
    """sha256 over a canonical (sorted, compact) JSON serialization."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def config_hash(cfg: RunConfig) -> str:
    return canonical_hash(config_to_dict(cfg))


def filter_model_hash(fcfg: FilterConfig) -> str:
    """Hash of the tracker's model alone (dynamics, readout, noise handling).

    Deliberately excludes the field model and the initial mean, so runs over
    different field types can assert they used the identical tracker.
    """
    ph, nz = fcfg.physics, fcfg.noise
    return canonical_hash({
        "dynamics": {
            "gamma_relax": ph.gamma_relax, "dt": ph.dt,
            "q_x": ph.q_x, "q_z": ph.q_z,
        },
        "readout": {"g_d": ph.g_d},
        "noise": {
            "r_true": nz.r_true, "r_init": nz.r_init, "alpha": nz.alpha,
            "adapt_window": nz.adapt_window, "r_floor": nz.r_floor,
        },
        "mode": fcfg.mode,
        "adapt_convention": fcfg.adapt_convention,
    })


# ----------------------------------------------------------------------------
# canned tracking-scenario fields
# ----------------------------------------------------------------------------

def bundled_waveform_path(name: str) -> Path:
    """Filesystem path of a packaged reference waveform CSV."""
    candidate = resources.files("spintrack").joinpath("data", name)
    with resources.as_file(candidate) as p:
        return Path(p)


# Per-kind process-noise rate for the canned tracking scenarios.  The wide
# mean-reverting and staircase drives need a fast tracker (the error budget is
# dominated by lag, not by measurement noise); the gentle waveform drives are
# best served by the ordinary slow-drift setting.
_TRACK_ALPHA = {"ou": 4000.0, "piecewise": 4000.0}


def tracking_alpha(kind: str, override=None, fallback: float = 0.1) -> float:
    """Process-noise rate the tracker should use for a canned scenario."""
    if override is not None:
        return float(override)
    return float(_TRACK_ALPHA.get(kind, fallback))


def tracking_field(kind: str, omega0: float, duration_s: float,
                   ou_theta: float = 1.0, ou_std: float = 9000.0,
                   staircase_step: float = 3600.0) -> FieldModelSpec:
    """Default field model for a tracking scenario of the given kind.

    The mean-reverting ("ou") and staircase ("piecewise") drives default to
    excursions of several thousand rad/s around ``omega0``: the tracker's
    frequency error floor is linewidth-limited, so a drive that is meant to be
    followed to a small fraction of its own size must swing well above that
    floor.  The staircase rises through four equal dwells spanning
    ``omega0 ± 1.5*staircase_step``.
    """
    from .fields import (ConstantField, OrnsteinUhlenbeckField, PiecewiseField,
                         RandomWalkField)
    from .ingest import load_reference_field_csv

    if kind == "constant":
        return ConstantField(omega0)
    if kind == "random_walk":
        return RandomWalkField(omega0, _BASE["field"]["sigma2"])
    if kind == "ou":
        return OrnsteinUhlenbeckField(
            omega0=omega0, mean=omega0, theta=ou_theta,
            sigma_ou=ou_std * math.sqrt(2.0 * ou_theta))
    if kind == "piecewise":
        q = duration_s / 4.0
        return PiecewiseField((
            (0.0, omega0 - 1.5 * staircase_step),
            (q, omega0 - 0.5 * staircase_step),
            (2 * q, omega0 + 0.5 * staircase_step),
            (3 * q, omega0 + 1.5 * staircase_step),
        ))
    if kind == "burst":
        return load_reference_field_csv(bundled_waveform_path("burst_waveform.csv"))
    if kind == "drift":
        return load_reference_field_csv(bundled_waveform_path("random_walk_field.csv"))
    raise InvalidParameter(
        "tracking field kind must be constant|random_walk|ou|piecewise|burst|drift, "
        f"got {kind!r}")
