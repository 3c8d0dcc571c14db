"""Exception hierarchy shared by all modules."""


class ReachCertError(Exception):
    """Base class for every error raised by reachcert."""


class ValidationError(ReachCertError, ValueError):
    """Input failed a structural check (shape, Hermiticity, dimension...)."""


class InvalidInputError(ValidationError):
    """Input is well formed but outside an operation's domain."""


class NotTracePreservingError(ValidationError):
    pass


class GridError(ValidationError):
    """Drift and control time grids cannot be aligned."""


class ScheduleError(ValidationError):
    pass


class NotReachableError(ReachCertError):
    """A synthesis precondition (majorization) rules the target out."""


class DivergedError(ReachCertError, ArithmeticError):
    """A numerical routine produced non-finite values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
