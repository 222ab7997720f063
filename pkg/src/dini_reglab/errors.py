"""Exception types shared across the package."""


class RegLabError(Exception):
    """Base class for all package errors."""


class DomainError(RegLabError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class SingularPointError(DomainError):
    """Evaluation requested at a singular point of a closed-form field."""


class EllipticityError(RegLabError, ValueError):
    """A coefficient field is not (uniformly) elliptic where required."""


class PreconditionError(RegLabError, ValueError):
    """An input violates a documented precondition."""


class AccuracyError(RegLabError, ArithmeticError):
    """Quadrature could not reach the requested tolerance.

    ``achieved`` holds the last relative change observed and ``estimate``
    the best value computed before giving up.
    """

    def __init__(self, msg, achieved=None, estimate=None):
        super().__init__(msg)
        self.achieved = achieved
        self.estimate = estimate


class NonConvergenceError(RegLabError, RuntimeError):
    """An iterative solver hit ``max_iter`` without meeting its tolerance."""

    def __init__(self, msg, best=None, residual=None, iterations=None):
        super().__init__(msg)
        self.best = best
        self.residual = residual
        self.iterations = iterations
