"""Exception types shared across the package."""

from __future__ import annotations


class DoortrackError(Exception):
    """Base class for all doortrack errors."""


class InvalidInputError(DoortrackError, ValueError):
    """An argument violates an operation's preconditions."""


class ScenarioFormatError(DoortrackError, ValueError):
    """A scenario or pair-table file is malformed.

    Carries ``line`` (1-based) when the offending line is known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SingularityError(DoortrackError, ArithmeticError):
    """A position coincides with an anchor; the measurement model is undefined."""


class FilterDivergenceError(DoortrackError, ArithmeticError):
    """The filter produced a non-finite innovation covariance.

    ``pair`` identifies the anchor pair whose update failed.
    """

    def __init__(self, message: str, pair=None):
        super().__init__(message)
        self.pair = pair


class InitializationError(DoortrackError, ArithmeticError):
    """Position initialization could not resolve a finite grid minimum."""


class ZeroEvidenceError(DoortrackError):
    """A transition window produced no fixes inside the evaluation band."""


class CalibrationError(DoortrackError):
    """Calibration found no usable transition windows at all."""


class MapGenerationError(DoortrackError):
    """Random map generation could not satisfy the requested constraints."""
