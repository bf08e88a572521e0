"""Figure rendering over spintrack run directories.

This package reads only the exported artifacts of a run (CSV files plus
``summary.json``); it never imports the toolkit that produced them, so the
two sides stay decoupled behind the documented file schemas.
"""

from .render import (FIGURES, FigureError, FigureManifest, RenderReport,
                     render_all, render_report)

__all__ = [
    "FIGURES",
    "FigureError",
    "FigureManifest",
    "RenderReport",
    "render_all",
    "render_report",
]
