"""Exception types shared across the package."""


class RingsimError(Exception):
    pass


class InvalidParameterError(RingsimError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class DimensionError(RingsimError, ValueError):
    """Vector or matrix shapes do not agree."""


class InvalidConfigurationError(RingsimError, ValueError):
    """A component was wired up in a way it does not support."""


class RegimeError(InvalidParameterError):
    """A bound formula was evaluated outside the regime where it is defined."""


class SimulationGuardError(RingsimError, RuntimeError):
    """The event loop hit its virtual-time cap without reaching the horizon."""
