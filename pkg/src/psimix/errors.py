"""Exception types raised across the package."""


class PsimixError(Exception):
    """Base class for all package errors."""


class NotIrreducible(PsimixError):
    pass


class NotAperiodic(PsimixError):
    pass


class CapExceeded(PsimixError):
    """An enumeration would exceed the configured size cap."""


class HorizonTooLarge(CapExceeded):
    pass


class AlphabetTooLarge(CapExceeded):
    pass


class ZeroProbabilityPrefix(PsimixError):
    pass


class InconsistentLambda(PsimixError):
    pass


class NotConverged(PsimixError):
    pass


class DInfeasible(PsimixError):
    pass


class ZeroDistortionAmbiguous(PsimixError):
    pass


class InfeasibleParameters(PsimixError):
    pass


class BadInterval(PsimixError, ValueError):
    pass


class LengthMismatch(PsimixError, ValueError):
    pass


class ConfigMismatch(PsimixError):
    pass


class ConfigError(PsimixError, ValueError):
    """Malformed chain, channel or experiment description."""
