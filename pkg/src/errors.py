"""
Exception types raised by the narrow-escape toolkit.
"""

from typing import Optional


class NarrowEscapeError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(NarrowEscapeError, ValueError):
    """A scalar argument is outside its documented range."""


class DomainError(NarrowEscapeError, ValueError):
    """A point is off the boundary, outside the domain, or out of the chart."""


class SingularEvaluationError(NarrowEscapeError):
    """A kernel was evaluated on its diagonal."""


class NotConfiguredError(NarrowEscapeError):
    """A Green provider has no data for the requested quantity."""


class NoAbsorptionError(NarrowEscapeError):
    """Every Monte Carlo path exhausted its time budget."""


class StepTooLargeError(NarrowEscapeError):
    """An Euler step left the domain by more than the reflection can repair."""


class QuadratureFailure(NarrowEscapeError):
    """
    Quadrature did not reach its tolerance within the node budget.

    The best estimate so far is kept so callers can still report it.
    """

    def __init__(self, message: str, partial_estimate: float, error_estimate: float):
        super().__init__(message)
        self.partial_estimate = partial_estimate
        self.error_estimate = error_estimate


class ConfigError(NarrowEscapeError, ValueError):
    """An experiment configuration field failed validation."""

    def __init__(self, path: str, message: str, report: Optional[object] = None):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.report = report
