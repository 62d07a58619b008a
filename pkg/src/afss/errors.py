"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Raised when an input violates a documented contract."""


class ParseError(ValidationError):
    """A sidecar file could not be parsed.

    ``line`` is the 1-based line (or row) number of the offending input.
    """

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{self.path}:{line}: {message}")


class VersionError(ParseError):
    """The file declares a format version this build does not understand."""


class StaleMetricsWarning(UserWarning):
    """Metrics were offered on an epoch that is not a refresh epoch and were ignored."""
