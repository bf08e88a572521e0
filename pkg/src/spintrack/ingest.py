"""Loading measured (or exported) delimited data back into the toolkit.

Files are plain UTF-8 CSV with a mandatory header row; lines starting with
``#`` are comments.  Values never change meaning on the way in -- the only
conversion applied is the explicit ``voltage_scale`` -- and every complaint
about a file carries the 1-based physical line number it refers to.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonUniformSampling, ParseError, SchemaError
from .fields import WaveformField
from .simulate import Trace

#: Allowed relative deviation of any timestamp gap from the median gap.
UNIFORMITY_TOL = 0.01
#: Allowed relative mismatch between the inferred and a declared sample rate.
FS_TOL = 1e-3


@dataclass(frozen=True)
class IngestSpec:
    """Where and how to read a measurement trace.

    path          : CSV file location
    time_col      : column with sample times in seconds
    voltage_col   : column with detector readings
    reference_col : optional column with ground-truth angular frequency
                    (rad/s), e.g. from a calibrated applied field
    voltage_scale : multiplier applied to the raw readings, V per file unit
    expected_fs   : optional declared sample rate to verify against, Sa/s
    """

    path: str | Path
    time_col: str = "t_s"
    voltage_col: str = "y_V"
    reference_col: str | None = "omega_true_rad_s"
    voltage_scale: float = 1.0
    expected_fs: float | None = None


def _read_rows(path: Path):
    """Yield (line_number, fields) for data rows; skip comments and blanks."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if row[0].lstrip().startswith("#"):
                continue
            yield lineno, row


def _parse_float(text: str, column: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"line {lineno}: cannot parse {column}={text!r} as a number",
            line=lineno) from None


def load_trace_csv(spec: IngestSpec) -> Trace:
    """Read a voltage trace, inferring ``dt`` from the timestamps.

    dt is the median timestamp gap.  Any individual gap deviating from it by
    more than 1% raises :class:`NonUniformSampling` (the reconstruction below
    assumes a uniform grid); the same error reports a mismatch against
    ``expected_fs`` beyond 0.1%.  An empty reference field in a row is
    allowed only when every row leaves it empty.
    """
    path = Path(spec.path)
    rows = _read_rows(path)

    try:
        header_line, header = next(rows)
    except StopIteration:
        raise SchemaError(f"{path}: file has no header row") from None
    names = [h.strip() for h in header]
    required = [spec.time_col, spec.voltage_col]
    missing = [c for c in required if c not in names]
    if missing:
        raise SchemaError(f"{path}: missing required column(s) {missing}; header has {names}")
    it = names.index(spec.time_col)
    iv = names.index(spec.voltage_col)
    iref = None
    if spec.reference_col is not None and spec.reference_col in names:
        iref = names.index(spec.reference_col)

    t_vals: list[float] = []
    y_vals: list[float] = []
    ref_vals: list[float] = []
    ref_seen = 0
    n_cols = len(names)
    for lineno, row in rows:
        if len(row) != n_cols:
            raise ParseError(
                f"line {lineno}: expected {n_cols} fields, found {len(row)}",
                line=lineno)
        t_vals.append(_parse_float(row[it], spec.time_col, lineno))
        y_vals.append(_parse_float(row[iv], spec.voltage_col, lineno))
        if iref is not None:
            cell = row[iref].strip()
            if cell != "":
                ref_vals.append(_parse_float(cell, spec.reference_col, lineno))
                ref_seen += 1
            elif ref_seen:
                raise ParseError(
                    f"line {lineno}: reference column went empty mid-file",
                    line=lineno)

    if len(t_vals) < 2:
        raise SchemaError(f"{path}: need at least 2 data rows, found {len(t_vals)}")

    t = np.asarray(t_vals)
    gaps = np.diff(t)
    dt = float(np.median(gaps))
    if dt <= 0:
        raise NonUniformSampling(f"{path}: non-increasing timestamps (median gap {dt!r})")
    bad = np.abs(gaps - dt) > UNIFORMITY_TOL * dt
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NonUniformSampling(
            f"{path}: timestamp gap {gaps[k]!r} at sample {k + 1} deviates more "
            f"than {UNIFORMITY_TOL:.0%} from the median gap {dt!r}")
    if spec.expected_fs is not None:
        fs = 1.0 / dt
        if abs(fs - spec.expected_fs) > FS_TOL * spec.expected_fs:
            raise NonUniformSampling(
                f"{path}: inferred rate {fs!r} Sa/s differs from declared "
                f"{spec.expected_fs!r} Sa/s by more than {FS_TOL:.1%}")

    y = np.asarray(y_vals) * spec.voltage_scale
    omega_true = None
    if ref_seen:
        if ref_seen != len(y_vals):
            raise SchemaError(
                f"{path}: reference column filled in {ref_seen} of {len(y_vals)} rows")
        omega_true = np.asarray(ref_vals)

    meta = {
        "kind": "ingested",
        "source": str(path),
        "voltage_scale": spec.voltage_scale,
        "rows": len(y_vals),
        "inferred_fs": 1.0 / dt,
    }
    return Trace(dt, y, omega_true, meta)


def load_reference_field_csv(path) -> WaveformField:
    """Read a ``t_s,b_nT`` waveform usable as simulator drive or ground truth."""
    path = Path(path)
    rows = _read_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise SchemaError(f"{path}: file has no header row") from None
    names = [h.strip() for h in header]
    missing = [c for c in ("t_s", "b_nT") if c not in names]
    if missing:
        raise SchemaError(f"{path}: missing required column(s) {missing}; header has {names}")
    it = names.index("t_s")
    ib = names.index("b_nT")

    t_vals: list[float] = []
    b_vals: list[float] = []
    prev_t = -math.inf
    for lineno, row in rows:
        if len(row) != len(names):
            raise ParseError(
                f"line {lineno}: expected {len(names)} fields, found {len(row)}",
                line=lineno)
        tv = _parse_float(row[it], "t_s", lineno)
        if tv <= prev_t:
            raise SchemaError(
                f"{path}: line {lineno}: times must be strictly increasing")
        prev_t = tv
        t_vals.append(tv)
        b_vals.append(_parse_float(row[ib], "b_nT", lineno))

    if len(t_vals) < 2:
        raise SchemaError(f"{path}: need at least 2 waveform samples, found {len(t_vals)}")
    return WaveformField(np.asarray(t_vals), np.asarray(b_vals))


def write_reference_field_csv(spec: WaveformField, path) -> Path:
    """Inverse of :func:`load_reference_field_csv` (exact round-trip)."""
    path = Path(path)
    t = spec.times_s.tolist()
    b = spec.b_nt.tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t_s,b_nT\n")
        for k in range(len(t)):
            fh.write(f"{t[k]!r},{b[k]!r}\n")
    return path
