"""Exception types shared across the package.

Domain errors map to CLI exit code 3; :class:`ConfigError` maps to exit
code 2.
"""


class BdreError(Exception):
    """Base class for all package errors."""


class ConfigError(BdreError):
    """Invalid configuration: bad key, bad type, or out-of-range value."""


class ZeroLambdaError(BdreError):
    """An operation requiring a positive up-rate met a site with rate 0."""


class ZeroLambdaAtSiteError(ZeroLambdaError):
    """A series evaluation met a site with zero up-rate."""


class ZeroMuLError(BdreError):
    """An operation requiring a positive deepest down-rate met rate 0."""


class ConditionsViolatedError(BdreError):
    """The environment law fails the checkable model hypotheses."""


class NumericalUnderflowError(BdreError):
    """A renormalization factor vanished during vector iteration."""


class NoConvergenceError(BdreError):
    """Power iteration failed to converge within the iteration budget."""


class AbsorbedStateError(BdreError):
    """The process reached a site with total rate 0 and cannot leave."""


class WindowOverflowError(BdreError):
    """An environment window hit its growth limit."""


class PathNotFirstPassageError(BdreError):
    """Crossing counts need a path from 0 to its first visit of 1."""


class CensoredRealizationError(BdreError):
    """A censored branching realization cannot be used for reconstruction."""


class ExcessCensoringError(BdreError):
    """Too many censored samples for a meaningful comparison."""


class EmptySampleError(BdreError):
    """A statistic was requested for an empty sample."""
