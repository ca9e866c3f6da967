"""Exception hierarchy shared by all modules."""


class WristError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(WristError, ValueError):
    """A non-finite or malformed numeric input."""


class DomainError(WristError, ValueError):
    """An input outside the physical domain (e.g. negative electrical power)."""


class GeometryInfeasibleError(WristError, ValueError):
    """Link lengths that cannot close the mechanism."""


class InconsistentLengthsError(WristError, ValueError):
    """Actuator lengths that violate the sum-of-lengths closure."""


class InfeasibleLengthsError(WristError, ValueError):
    """Actuator lengths that no pose of the wrist can produce."""


class ModelAssemblyError(WristError, RuntimeError):
    """The assembled equations of motion are not physically meaningful."""


class DynamicsSingularityError(WristError, ArithmeticError):
    """The mass matrix could not be inverted."""


class DivergenceError(WristError, ArithmeticError):
    """A rollout produced a non-finite state.

    ``time`` is the simulation time of the last finite state and ``tick``
    the control tick index when raised from a closed-loop run.
    """

    def __init__(self, message, time=None, tick=None):
        super().__init__(message)
        self.time = time
        self.tick = tick


class ConfigError(WristError, ValueError):
    """A configuration file could not be parsed or validated."""


class SchemaError(ConfigError):
    """A CSV series is missing columns or has malformed rows."""
