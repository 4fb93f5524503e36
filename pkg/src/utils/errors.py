"""
Exception hierarchy for Dig2Size.

Library code raises these; only the command-line entry point turns them
into process exit codes.
"""

from typing import Optional


class Dig2SizeError(Exception):
    """Base class for all Dig2Size errors."""

    exit_code = 3


class ConfigError(Dig2SizeError):
    """Invalid configuration, preset or command-line usage."""

    exit_code = 1


class DataError(Dig2SizeError, ValueError):
    """Input data violates a documented contract."""

    exit_code = 2


class ParseError(DataError):
    """Malformed row in an input file."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        """Initialize the ParseError.

        Args:
            message: Description of the problem.
            path: File being parsed, if known.
            line: 1-based line number in that file (the header is line 1).
        """
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location += f"{path}"
        if line is not None:
            location += f" line {line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)


class SchemaError(DataError):
    """Missing or unknown channel, column or field."""


class DomainError(DataError):
    """Argument outside the domain of an operation."""


class RangeError(DataError):
    """Requested time range lies outside the available data."""


class AlignmentError(DataError):
    """Channels that must share rate and length do not."""


class NoExcavationError(DataError):
    """Jerk threshold never crossed; the trial holds no dig."""


class InsufficientDataError(DataError):
    """Too few samples, rows or trials for the requested statistic."""


class ScopeError(DataError):
    """Features from different sources, epochs or piles were mixed."""


class DegenerateReferenceError(DataError):
    """Reference calibration with zero spread cannot classify."""


class ContractViolation(DataError):
    """Caller broke a documented precondition (e.g. band below the cutoff)."""
