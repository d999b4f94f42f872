"""Exception hierarchy shared by the library and the command line."""


class NSVError(Exception):
    """Base class for every error raised by nsvdecay."""


class ValidationError(NSVError, ValueError):
    """An input violates a structural or physical invariant."""


class DomainError(ValidationError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(NSVError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target."""


class QuadratureError(NumericalError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class InstabilityError(NumericalError):
    """Time integration produced non-finite values.

    ``last_state`` and ``last_time`` hold the last finite state reached.
    """

    def __init__(self, message, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class PlanError(ValidationError):
    """A verification plan is malformed or internally inconsistent."""
