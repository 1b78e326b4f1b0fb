"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid combination of options (scheme/dimension, controller settings, config file)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class HorizonError(DomainError):
    """Time at or beyond the terminal horizon where the gain is undefined."""


class ExtrapolationError(DomainError):
    """Query time outside a precomputed flow grid."""


class IntegrationError(ArithmeticError):
    """Numerical integration lost positive definiteness or finiteness."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time
