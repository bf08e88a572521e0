"""Exception types shared across the toolkit.

Everything raised on purpose derives from :class:`SpintrackError`, so callers
(and the CLI) can catch one base class and still report a precise category.
"""

from __future__ import annotations


class SpintrackError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(SpintrackError):
    """A scalar or structural argument violates its documented constraint."""


class InvalidCovariance(SpintrackError):
    """A covariance matrix is non-finite, non-square, or irreparably bad."""


class OutOfRange(SpintrackError):
    """A query falls outside the domain covered by the data (e.g. waveform time)."""


class NumericalFailure(SpintrackError):
    """The filter hit a numerically meaningless state (e.g. innovation variance <= 0).

    Carries ``step`` (the sample index at which the failure occurred) when
    raised from a filter run.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class FitDiverged(SpintrackError):
    """The iterative fit exhausted its iteration budget without converging.

    ``last_fit`` holds the final iterate so callers can inspect how far the
    solver got.
    """

    def __init__(self, message: str, last_fit=None):
        super().__init__(message)
        self.last_fit = last_fit


class SchemaError(SpintrackError):
    """A delimited file lacks required columns or has an unusable layout."""


class NonUniformSampling(SpintrackError):
    """Timestamps in an ingested trace deviate too far from a uniform grid."""


class ParseError(SpintrackError):
    """A row of a delimited file could not be parsed.

    ``line`` is the 1-based physical line number in the source file.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line
