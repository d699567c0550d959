"""Exception types shared across the package."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EngineError):
    """A malformed record in an input stream."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(EngineError):
    """Structurally valid input that violates a contract."""


class DimensionMismatchError(ValidationError):
    """Feature dimensionality differs from what the stream or model established."""


class InsufficientDataError(EngineError):
    """Not enough data to perform the requested operation."""


class CalibrationError(EngineError):
    """Training data cannot support a calibrated model (degenerate statistics)."""


class NumericError(EngineError):
    """A numeric computation failed: divergence, overflow, or a degenerate root."""
