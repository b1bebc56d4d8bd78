"""Exception hierarchy shared by the numerical modules and the CLI."""

from __future__ import annotations

from typing import Any, List, Optional


class FracsphereError(RuntimeError):
    """Generic error raised when a computation cannot continue."""


class DomainError(FracsphereError, ValueError):
    """Raised when an argument lies outside the admissible range."""


class GeometryMismatch(DomainError):
    """Raised when fields, grids and spectra disagree on n, mode or degree cap."""


class ConfigurationError(DomainError):
    """Raised for invalid experiment configuration (flags, inline K, schedules)."""


class MetadataError(DomainError):
    """Raised when K-profile critical-point metadata is missing or degenerate."""


class TailDataError(FracsphereError, ValueError):
    """Raised when a Pohozaev residual needs tail data the caller did not supply."""


class QuadratureError(FracsphereError):
    """Raised when a refinement loop fails to settle, with the last values seen."""

    def __init__(
        self,
        message: str,
        *,
        value: Optional[float] = None,
        last_change: Optional[float] = None,
    ) -> None:
        super().__init__(message)
        self.value = value
        self.last_change = last_change


class IllConditionedSystem(FracsphereError):
    """Raised when a dense linear system is too close to singular to trust."""

    def __init__(self, message: str, *, rcond: Optional[float] = None) -> None:
        super().__init__(message)
        self.rcond = rcond


class SolverError(FracsphereError):
    """Base class for minimizer and continuation failures."""


class SolverDivergence(SolverError):
    """Raised when the gradient stalls above tolerance at the iteration cap."""

    def __init__(self, message: str, *, state: Any = None) -> None:
        super().__init__(message)
        self.state = state


class PositivityError(SolverError):
    """Raised when positivity repair leaves no usable positive iterate."""

    def __init__(self, message: str, *, state: Any = None) -> None:
        super().__init__(message)
        self.state = state


class ContinuationError(SolverError):
    """Raised when a minimization inside a continuation fails; keeps the rows so far."""

    def __init__(
        self,
        message: str,
        *,
        trajectory: Optional[List[Any]] = None,
        tau: Optional[float] = None,
    ) -> None:
        super().__init__(message)
        self.trajectory = list(trajectory or [])
        self.tau = tau


__all__ = [
    "ConfigurationError",
    "ContinuationError",
    "DomainError",
    "FracsphereError",
    "GeometryMismatch",
    "IllConditionedSystem",
    "MetadataError",
    "PositivityError",
    "QuadratureError",
    "SolverDivergence",
    "SolverError",
    "TailDataError",
]
