"""Exception hierarchy shared by all modules."""


class FdhapError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(FdhapError, ValueError):
    """Invalid parameters, mismatched dimensions or a bad config file.

    ``path`` names the offending field (dotted, e.g. ``params.alpha``) when
    the error comes from a configuration file.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DomainError(ConfigurationError):
    """An argument lies outside the domain of a closed-form expression."""


class DegenerateChannelError(FdhapError, ValueError):
    """A channel column has zero norm, so no MRC/MRT beam exists."""


class NumericalError(FdhapError, ArithmeticError):
    """A numerical routine failed (ill-conditioning, non-convergence)."""


class EstimationError(NumericalError):
    """The MMSE normal matrix is too ill-conditioned to solve."""

    def __init__(self, message, condition_number=None):
        self.condition_number = condition_number
        super().__init__(message)


class QuadratureError(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        self.achieved = achieved
        super().__init__(message)


class InfeasibleError(FdhapError):
    """An optimization problem has no strictly feasible point."""

    def __init__(self, message, certificate=None):
        self.certificate = certificate
        super().__init__(message)
