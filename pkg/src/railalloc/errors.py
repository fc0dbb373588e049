"""Exception types raised across the package."""


class RailallocError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RailallocError, ValueError):
    pass


class UndefinedAverageError(RailallocError):
    """A device has no associated users, so its average rate is undefined."""


class SingularGradientError(RailallocError):
    """The capacity gradient diverges (zero bandwidth on an interference-free device)."""


class InfeasibleProblemError(RailallocError):
    pass


class MaxIterationsError(RailallocError):
    """Iteration budget exhausted. The best iterate or report is attached as ``result``."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateStepError(RailallocError):
    pass


class NoDecreaseError(RailallocError):
    pass


class BracketError(RailallocError):
    pass


class TooLargeInstanceError(RailallocError):
    pass


class ZeroDistanceError(RailallocError, ValueError):
    pass


class ConfigError(RailallocError, ValueError):
    pass
