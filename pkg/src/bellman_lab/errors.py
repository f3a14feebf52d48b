"""Exception types shared across the package."""


class BellmanLabError(Exception):
    pass


class DomainError(BellmanLabError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ResourceError(BellmanLabError):
    """A requested object would exceed a configured size budget."""


class NumericError(BellmanLabError, ArithmeticError):
    """An iterative solve failed to converge or a construction is infeasible."""


class SamplingError(BellmanLabError):
    """A feasible sample could not be produced within the rejection budget."""


class InvariantViolation(BellmanLabError, AssertionError):
    """A property that must hold mathematically was observed to fail."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}
