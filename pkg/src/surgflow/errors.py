"""Exception hierarchy for validation and computation failures.

File-ingestion errors carry the offending file and (1-based) line number so
batch runs can point at the exact row that broke.
"""

from __future__ import annotations


class SurgflowError(Exception):
    """Base class for all package errors."""


class ValidationError(SurgflowError):
    """Input violates a documented invariant."""


class FileFormatError(ValidationError):
    """Validation error tied to a location in an input file."""

    def __init__(self, message: str, file: str | None = None, line: int | None = None):
        self.file = file
        self.line = line
        loc = ""
        if file is not None:
            loc = f" [{file}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)


class MalformedRow(FileFormatError):
    """A row fails to parse or violates a field-level invariant."""


class UnknownEventKind(FileFormatError):
    """Event kind is not a member of the closed event registry."""


class NonMonotonicTimestamps(FileFormatError):
    """Timestamps are not strictly increasing where required."""


class OverlappingGroundTruth(FileFormatError):
    """Ground-truth segments overlap in time."""


class UnknownManipulator(ValidationError):
    """Manipulator identifier is not one of the tracked arms."""


class EvenWindow(ValidationError):
    """Median filter window length must be odd."""


class LengthMismatch(ValidationError):
    """Paired streams differ in length or frame rate."""


class TooFewPairs(ValidationError):
    """Not enough paired observations for the statistic."""


class ConstantSeries(ValidationError):
    """A series has zero variance; the statistic is undefined."""


class InvalidConfig(ValidationError):
    """A configuration value is outside its documented range."""
