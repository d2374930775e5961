"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class DegenerateTangentError(DomainError):
    """Could not build a unit tangent vector orthogonal to the mean direction."""


class ConcentrationOverflowError(DomainError):
    """Samples are so aligned that the concentration estimate diverges."""


class DegenerateSetError(ValueError):
    """An embedding set has no usable structure (e.g. all vectors identical)."""


class ParseError(ValueError):
    """An embedding file could not be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NotFoundError(LookupError):
    """A search finished without meeting its target."""
