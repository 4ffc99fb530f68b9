#!/usr/bin/env python
"""Provide error classes."""


class QUSToolsError(Exception):
    """Base error class."""


class ConfigError(QUSToolsError, ValueError):
    """Raise when a config value is missing, malformed or out of range."""


class DataError(QUSToolsError, ValueError):
    """Raise when input data cannot be used as given."""


class DimensionMismatchError(DataError):
    """Raise when array shapes do not agree with each other or with a grid."""


class GridMismatchError(DataError):
    """Raise when two maps that must share a SpectralGrid do not."""


class EmptyInputError(DataError):
    """Raise when a stack, layout or ROI is empty."""


class NonPositiveValueError(DataError):
    """Raise when a value that must be strictly positive is not.

    The offending cell is kept on ``self.cell`` so callers can report it.
    """

    def __init__(self, msg, cell=None):
        """Set up the Exception."""
        super().__init__(msg)
        self.cell = cell


class DegenerateRangeError(DataError):
    """Raise when the upper weight threshold does not exceed the lower one."""

    def __init__(self, upper, lower):
        """Set up the Exception."""
        super().__init__(f"Degenerate dynamic range: upper threshold {upper:g} <= lower threshold {lower:g}.")
        self.upper = upper
        self.lower = lower


class MalformedFileError(DataError):
    """Raise when an input file does not follow its declared format."""

    def __init__(self, path, msg, line=None, column=None):
        """Set up the Exception."""
        where = f"{path}"
        if line is not None:
            where += f":{line}"
        if column is not None:
            where += f":{column}"
        super().__init__(f"{where}: {msg}")
        self.path = path
        self.line = line
        self.column = column


class SolverError(QUSToolsError):
    """Base class for estimator failures."""


class SingularSystemError(SolverError, DataError):
    """Raise when a linear system cannot be factorized reliably."""

    def __init__(self, msg, condition=None):
        """Set up the Exception."""
        if condition is not None:
            msg = f"{msg} (condition estimate {condition:.3e})"
        super().__init__(msg)
        self.condition = condition


class ConvergenceError(SolverError):
    """Raise when iterative solves did not converge and the caller demanded it."""
