"""Exception hierarchy shared by all erskit modules."""

from __future__ import annotations


class ErskitError(Exception):
    """Base class for every error raised by erskit."""


class ConstructionError(ErskitError, ValueError):
    """Raised when a vector cannot be turned into a unit embedding."""


class DimensionMismatchError(ErskitError, ValueError):
    """Raised when two embeddings (or an embedding and a model) disagree on d."""


class DegenerateError(ErskitError, ArithmeticError):
    """Raised when a mean, projection or aggregate collapses to (near) zero norm."""


class EmptyInputError(ErskitError, ValueError):
    """Raised when an operation requires a non-empty collection."""


class ProtocolError(ErskitError, ValueError):
    """Raised for unresolvable ids or protocols that cannot be evaluated."""


class FormatError(ErskitError, ValueError):
    """Malformed input file.

    Carries the offending path and 1-based line number so the CLI can point
    at the exact record.
    """

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")
