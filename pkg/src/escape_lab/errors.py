"""Exception hierarchy shared by all escape_lab modules."""


class EscapeLabError(Exception):
    """Base class for library errors."""


class DomainError(EscapeLabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class PreconditionError(EscapeLabError, ValueError):
    """A documented precondition of an operation does not hold."""


class NumericalError(EscapeLabError, RuntimeError):
    """An iterative method failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ResourceError(EscapeLabError, RuntimeError):
    """A computation would exceed a configured size budget."""
