"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigError(ValueError):
    """An experiment or CLI configuration is invalid or infeasible."""


class DegenerateGainError(ZeroDivisionError):
    """The innovation variance of a Kalman update is exactly zero."""
