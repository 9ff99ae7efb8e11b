"""Exception types shared across the package."""


class ShiftScanError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ShiftScanError):
    """Invalid configuration (bad flag combination, nonpositive scale, ...)."""


class DataError(ShiftScanError):
    """Malformed input data (CSV rows, frame files, shape drift)."""


class DimensionMismatchError(ShiftScanError):
    """Vector lengths disagree.  Message always carries both lengths."""

    def __init__(self, expected: int, got: int, what: str = "vector"):
        self.expected = int(expected)
        self.got = int(got)
        super().__init__(f"{what} length mismatch: expected {expected}, got {got}")


class NumericError(ShiftScanError):
    """Non-finite value where finite arithmetic is required."""


class DetectorStoppedError(ShiftScanError):
    """Update attempted on a detector that has already stopped."""


class CalibrationError(ShiftScanError):
    """Threshold search failed (bracket expansion exhausted)."""


class NoRingError(ShiftScanError):
    """Radial profile has no qualifying ring peak."""


class EmptyImageError(ShiftScanError):
    """Binary image contains no foreground pixels to vote with."""
