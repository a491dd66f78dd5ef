"""Exception hierarchy shared across the package."""


class QNeatError(Exception):
    """Base class for all errors raised by qneat."""


class CycleError(QNeatError):
    """Enabled connections form a directed cycle."""


class DimensionError(QNeatError, ValueError):
    """Input length does not match what the network or operation expects."""


class GenomeError(QNeatError, ValueError):
    """A genome violates a structural invariant."""


class ParseError(QNeatError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        if location:
            message = f"{', '.join(location)}: {message}"
        super().__init__(message)
        self.row = row
        self.column = column


class RangeError(ParseError):
    """A feature value lies outside the byte range 0..255."""


class InsufficientData(QNeatError, ValueError):
    """Not enough records of some class or category for the request."""


class InvalidK(QNeatError, ValueError):
    """Fold count outside the supported range."""


class SchemaMismatch(QNeatError, ValueError):
    """Data shape does not match the model's input layer."""


class VersionError(QNeatError):
    """Model file carries an unsupported format version."""


class CorruptionError(QNeatError):
    """Model file is unreadable or fails checksum verification."""
