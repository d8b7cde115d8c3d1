"""Exception types raised across the package."""

from __future__ import annotations


class ResonanceBoxError(Exception):
    """Base class for all package errors."""


class DomainError(ResonanceBoxError, ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalError(ResonanceBoxError, ArithmeticError):
    """A numerical procedure failed to converge or to bracket a root."""


class ConfigurationError(ResonanceBoxError, ValueError):
    """A discretization or run configuration is unusable."""


class SearchError(NumericalError):
    """A root or degeneracy search found no sign change in its bracket."""


class RefinementError(NumericalError):
    """Gap refinement met a bracket that is not unimodal."""


class RegimeError(ResonanceBoxError):
    """A semiclassical formula was requested outside its validity regime."""


class StudyError(ResonanceBoxError):
    """A scaling study could not be completed for some hbar values."""

    def __init__(self, message: str, failing: list[float] | None = None):
        super().__init__(message)
        self.failing = list(failing or [])


class ConfigError(ResonanceBoxError, ValueError):
    """A configuration file could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
