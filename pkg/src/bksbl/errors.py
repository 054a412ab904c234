"""Exception types raised by the library."""


class DomainError(ValueError):
    """Argument outside a function's mathematical domain."""


class PoleError(DomainError):
    """Evaluation requested exactly at a pole (e.g. a prior at alpha = 0)."""


class ImproperDensityError(ValueError):
    """A normalized density was requested from an improper prior."""


class UnsupportedRegimeError(ValueError):
    """Parameter regime deliberately out of scope (e.g. epsilon > 1+rho)."""


class ConfigurationError(ValueError):
    """Inconsistent or invalid configuration."""


class ContractViolationError(ValueError):
    """Caller broke an interface contract (e.g. dimension mismatch)."""


class NumericalError(RuntimeError):
    """Numerical failure (factorization breakdown, inconsistent statistics)."""

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


class SingularMatrixError(NumericalError):
    """A matrix required to be invertible is (numerically) singular."""
