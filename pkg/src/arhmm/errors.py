"""Exception types shared across the package."""


class ArhmmError(Exception):
    """Base class for package errors."""


class StructureError(ArhmmError, ValueError):
    """Input has the wrong shape or too few elements."""


class DomainError(ArhmmError, ValueError):
    """A value lies outside the support of a density or constraint set."""


class NumericError(ArhmmError, ArithmeticError):
    """A computation produced a non-finite or singular result."""

    def __init__(self, message, track=None, t=None, state=None):
        super().__init__(message)
        self.track = track
        self.t = t
        self.state = state


class EstimationError(ArhmmError, RuntimeError):
    """Every optimizer start failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ParseError(ArhmmError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
