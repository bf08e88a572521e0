"""Command-line entry point: ``spintrack-figs render --run-dir <path>``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .render import FigureError, FigureManifest, render_report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spintrack-figs",
        description="Render figures from a completed run directory.")
    sub = parser.add_subparsers(dest="command", required=True)
    render = sub.add_parser("render", help="render figures for one run")
    render.add_argument("--run-dir", required=True, type=Path,
                        help="directory holding summary.json and the run CSVs")
    render.add_argument("--figs", default=None,
                        help="comma-separated figure names or aliases "
                             "(default: everything the run kind supports)")
    render.add_argument("--fmt", choices=("png", "svg"), default="svg",
                        help="output image format (default svg)")
    render.add_argument("--dpi", type=int, default=150,
                        help="raster resolution for png output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    figures = None
    if args.figs is not None:
        figures = tuple(s for s in (part.strip() for part in args.figs.split(","))
                        if s)
    try:
        manifest = FigureManifest(run_dir=args.run_dir, figures=figures,
                                  fmt=args.fmt, dpi=args.dpi)
        report = render_report(manifest)
    except FigureError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)},
                  sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return 2
    for name, path in report.written:
        print(f"wrote {path}")
    for name, reason in report.failed:
        print(f"figure {name} failed: {reason}", file=sys.stderr)
    total = len(report.written) + len(report.failed)
    print(f"rendered {len(report.written)}/{total} figures")
    return 0 if not report.failed else 3


if __name__ == "__main__":
    raise SystemExit(main())
