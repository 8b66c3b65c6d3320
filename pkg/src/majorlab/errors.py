"""Exception types shared across the package."""


class MajorlabError(Exception):
    """Base class for all package errors."""


class ValidationError(MajorlabError, ValueError):
    """Input failed a structural or domain check."""


class DegenerateInputError(ValidationError):
    """Probability-zero input such as a zero trace or zero denominator."""


class ConvergenceError(MajorlabError, ArithmeticError):
    """An iterative solver failed to deflate.

    ``index`` is the position of the eigenvalue that was still unresolved.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class AccuracyError(MajorlabError, ArithmeticError):
    """A quadrature refinement did not settle within tolerance."""


class ConfigError(MajorlabError, ValueError):
    """Experiment configuration could not be parsed or validated."""
