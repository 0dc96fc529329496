"""
Custom exceptions for the confsel library.

These exceptions provide specific error types for the different failure
modes of p-value computation, selection, simulation and file ingestion.
"""

from typing import Any, Optional


class ConfSelError(Exception):
    """Base exception for all confsel library errors."""
    pass


class ValidationError(ConfSelError, ValueError):
    """Raised when a domain value violates its invariants."""

    def __init__(self, message: str, field: Optional[str] = None, value: Any = None):
        super().__init__(message)
        self.field = field
        self.value = value


class InputFormatError(ConfSelError):
    """Raised when an input file cannot be parsed into calibration or test data."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        row: Optional[int] = None,
        column: Optional[str] = None,
    ):
        super().__init__(message)
        self.path = path
        self.row = row
        self.column = column


class SelectionError(ConfSelError):
    """Raised when a selection engine receives a configuration it cannot run."""

    def __init__(self, message: str, method: Optional[str] = None):
        super().__init__(message)
        self.method = method


class SimulationError(ConfSelError):
    """Raised when a simulation spec is invalid or a generator fails."""

    def __init__(self, message: str, scenario: Optional[str] = None):
        super().__init__(message)
        self.scenario = scenario
