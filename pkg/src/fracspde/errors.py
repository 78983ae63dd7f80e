"""Exception hierarchy shared by all modules."""


class FracSpdeError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(FracSpdeError, ValueError):
    """Inputs violate a documented precondition."""


class IdentifiabilityError(ValidationError):
    """An estimator cannot recover its parameter from the requested data.

    ``suggestions`` lists alternative mode pairs (or other hints) that the
    caller may try instead.
    """

    def __init__(self, message, suggestions=()):
        super().__init__(message)
        self.suggestions = tuple(suggestions)


class NumericalError(FracSpdeError, ArithmeticError):
    """A numerical routine failed (factorization, embedding, quadrature)."""
