"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(ToolkitError, ValueError):
    """A physical or numerical parameter is out of its legal range."""


class InfeasibleBandError(ToolkitError):
    """No odd-multiple travel time puts the implied segment speed in the band."""


class UnstableInputError(ToolkitError):
    """Demand at or beyond the stability boundary of the queueing model."""


class InfeasibleTargetError(ToolkitError):
    """Requested arrival time is earlier than free-flow travel allows."""


class ZoneTooShortError(ToolkitError):
    """The adjustment zone cannot realize the required delay."""


class ZoneOverflowError(ToolkitError):
    """No feasible speed curve exists (queue spillback out of the zone)."""


class InfeasibleRateError(ToolkitError):
    """Arrival rate incompatible with the minimum headway shift."""


class ConfigError(ToolkitError):
    """Problem with a CLI configuration file."""


class ConfigSyntaxError(ConfigError):
    """The configuration file is not well-formed."""


class ConfigSemanticError(ConfigError):
    """The configuration file parses but contains invalid values."""


class TruncationWarning(UserWarning):
    """Steady-state truncation left more probability mass than requested."""
