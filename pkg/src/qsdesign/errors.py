"""Exception types shared across the package."""


class QsdesignError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(QsdesignError, ValueError):
    """Invalid input: bad shapes, non-unit directions, malformed configuration."""


class DegeneracyError(QsdesignError, ArithmeticError):
    """Numerically degenerate computation: singular system, non-SPD matrix."""
