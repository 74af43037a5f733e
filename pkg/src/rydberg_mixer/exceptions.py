"""Exception hierarchy shared by the simulator modules."""


class DomainError(ValueError):
    """An argument lies outside the region where a formula is valid."""


class ConfigurationError(ValueError):
    """Invalid simulator or instrument configuration."""


class InsufficientDataError(ValueError):
    """Too few data points for the requested fit."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or produced non-finite output."""
