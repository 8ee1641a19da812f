"""Exception types shared across the library."""


class AgemmError(Exception):
    """Base class for all library-specific errors."""


class ConformabilityError(AgemmError, ValueError):
    """Operand dimensions do not conform to the requested product."""


class InvalidParamsError(AgemmError, ValueError):
    """Blocking parameters violate their constraints."""


class PackBoundsError(AgemmError, IndexError):
    """A requested block or tile range lies outside its parent."""


class IllegalLoopError(AgemmError, ValueError):
    """A loop that must stay sequential was requested for parallelization."""


class ConfigurationError(AgemmError, ValueError):
    """Thread topology or parallel configuration is unusable."""


class ConfigParseError(ConfigurationError):
    """An environment variable or config file entry could not be parsed."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name


class PowerDomainError(AgemmError, ValueError):
    """A metric was requested outside its mathematical domain."""


class EmptyWindowError(AgemmError, ValueError):
    """A trace window contains no usable samples."""


class CalibrationError(AgemmError, RuntimeError):
    """Empirical calibration produced unusable measurements."""


class GranularityWarning(UserWarning):
    """The chosen loop offers too few partition units for the topology."""


class PinningWarning(UserWarning):
    """Thread pinning was requested but is unavailable; continuing unpinned."""
