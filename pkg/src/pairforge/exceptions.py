"""Custom exceptions for pairforge."""

from typing import Optional


class PairForgeError(Exception):
    """Base exception for pairforge errors."""

    exit_code: int = 2

    def __init__(self, message: str, exit_code: Optional[int] = None) -> None:
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigurationError(PairForgeError):
    """Raised when a run file or setting fails validation."""

    exit_code = 1


class DispersionDomainError(PairForgeError):
    """Raised when a wavelength or temperature leaves a table's validity."""
    pass


class PhaseMatchingError(PairForgeError):
    """Raised when no physical phase-matching solution exists."""
    pass


class DetectionModelError(PairForgeError):
    """Raised when the analytical detection model cannot be evaluated."""
    pass


class SimulationError(PairForgeError):
    """Raised when a Monte Carlo run cannot be carried out."""
    pass


class StreamFormatError(PairForgeError):
    """Raised when a timestamp stream file is malformed."""
    pass


class AnalysisError(PairForgeError):
    """Raised when a time-tag estimator gets unusable input."""
    pass


class PolarizationError(PairForgeError):
    """Raised when a polarization estimator gets unusable input."""
    pass


class FocusingError(PairForgeError):
    """Raised for nonpositive focusing inputs."""

    exit_code = 1
