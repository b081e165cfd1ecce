"""Exception hierarchy shared by every module.

Validation errors (bad input, bad parameters) map to CLI exit code 1;
everything else derived from PanelCoresetError is a runtime failure (exit 2).
"""

from typing import Optional


class PanelCoresetError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ValidationError(PanelCoresetError):
    """Input or parameter failed validation."""

    exit_code = 1


class ParseError(ValidationError):
    """Malformed input file."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DuplicateKeyError(ValidationError):
    """The same (individual, time) key appeared twice."""


class InvalidQueryError(ValidationError):
    """Regression parameters outside the admissible parameter space."""


class InvalidSizeError(ValidationError):
    """Requested sample size is not achievable."""


class OverflowGuardError(ValidationError):
    """Instance size would leave the exactly representable range."""


class ConfigError(ValidationError):
    """Configuration value out of range."""


class DegenerateDatasetError(PanelCoresetError):
    """Dataset carries no signal for the requested construction."""


class NoDataError(PanelCoresetError):
    """Nothing to fit: the (weighted) support is empty."""
