"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid setup input: grid sizes, solver settings, config files."""


class DomainError(ValueError):
    """Arguments outside an operation's mathematical domain."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or produced garbage."""
