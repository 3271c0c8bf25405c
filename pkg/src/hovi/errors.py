"""Exception hierarchy shared across the package."""


class HoviError(Exception):
    """Base class for all package errors."""


class DomainError(HoviError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InputError(HoviError, ValueError):
    """Malformed or non-finite input data."""


class SingularityError(HoviError, ArithmeticError):
    """A quantity is evaluated at a point where it is not defined."""


class CapabilityError(HoviError):
    """The requested derivative order is not available from the oracle."""


class ConfigError(HoviError, ValueError):
    """Invalid solver / experiment configuration."""


class CatalogError(HoviError, KeyError):
    """Unknown problem name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class PreconditionError(HoviError, ValueError):
    """A documented precondition of an operation does not hold."""


class SubproblemError(HoviError, RuntimeError):
    """An inner solver failed to reach its residual tolerance."""

    def __init__(self, message, best_point=None, best_residual=float("inf"), iteration=None):
        super().__init__(message)
        self.best_point = best_point
        self.best_residual = best_residual
        self.iteration = iteration


class IntegrationError(HoviError, RuntimeError):
    """The continuous-time integrator could not advance."""

    def __init__(self, message, last_good_t=None):
        super().__init__(message)
        self.last_good_t = last_good_t
