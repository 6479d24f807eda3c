"""Exception hierarchy. Every solver failure is a ``VarStopError``."""


class VarStopError(Exception):
    pass


class DomainError(VarStopError, ValueError):
    pass


class NonMonotoneScale(VarStopError, ValueError):
    pass


class LimitUndetermined(VarStopError):
    pass


class Unbounded(VarStopError):
    """An infinite endpoint carries positive exit probability."""


class NoMaximizer(VarStopError):
    pass


class StartAboveMaximizer(VarStopError):
    pass


class TruncationError(VarStopError):
    pass


class BracketError(VarStopError):
    pass


class OutOfRegion(VarStopError):
    pass


class UnsupportedMarginal(VarStopError):
    """Transient case with a finite positive squared limit where the tie condition fails."""


class AssumptionViolated(VarStopError):
    pass


class EmptyEssentialSet(VarStopError):
    pass


class NoSignChange(VarStopError):
    pass


class UnsupportedRule(VarStopError):
    pass


class StepTooCoarse(VarStopError):
    pass


class ConfigError(VarStopError):
    pass


class ResolutionWarning(UserWarning):
    pass
