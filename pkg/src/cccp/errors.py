"""Exception types raised across the package."""


class CCCPError(Exception):
    """Base class for all package errors."""


class DomainError(CCCPError, ValueError):
    pass


class DimensionMismatch(CCCPError, ValueError):
    pass


class NotSymmetric(CCCPError, ValueError):
    pass


class NotPSD(CCCPError, ValueError):
    pass


class IndependenceViolated(CCCPError, ValueError):
    """Covariance or relation matrix has an imaginary part.

    The reformulations assume independent real and imaginary parts, which
    forces both matrices to be real.
    """


class SingularMatrix(CCCPError, ValueError):
    pass


class MissingOrthant(CCCPError, ValueError):
    """A bound construction was requested for a sign-unconstrained problem."""


class EmptyGrid(CCCPError, ValueError):
    pass


class UnsupportedDependence(CCCPError, ValueError):
    pass


class SolverFailure(CCCPError, RuntimeError):
    """The conic solver did not return an optimal point."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
