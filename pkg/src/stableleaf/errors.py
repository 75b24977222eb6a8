"""Exception hierarchy shared by all modules."""


class StableLeafError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(StableLeafError, ValueError):
    """Invalid map name, parameter list, or run configuration."""


class NoConvergence(StableLeafError):
    """Newton iteration did not reach the residual target."""


class NotHyperbolic(StableLeafError):
    """Fixed point is not a saddle (an eigenvalue is on or near the unit circle)."""


class OverflowHorizon(StableLeafError):
    """Cocycle growth exceeded the representable exponent range."""


class SingularJacobian(StableLeafError):
    """A Jacobian along the orbit has vanishing determinant."""


class DegenerateSingularValues(StableLeafError):
    """The two singular values coincide, so the contracted direction is undefined."""


class DegenerateField(DegenerateSingularValues):
    """The contracted direction field is degenerate at the fixed point."""


class StencilLeavesDomain(StableLeafError):
    """A finite-difference stencil point is outside the required neighbourhood."""


class GridMismatch(StableLeafError):
    """Two leaves do not share an arclength grid."""


class NoConvergenceAtCap(StableLeafError):
    """Leaf sequence did not meet the tolerance before the iterate cap."""


class NoInverse(StableLeafError):
    """The map has no inverse available."""


class InsufficientDecay(StableLeafError):
    """Too few usable points to fit a decay rate."""


class MissingInput(StableLeafError):
    """Expected input files are absent."""


class StoppedShort(StableLeafError):
    """A leaf branch ended before reaching its target arclength."""


class TangencyFailure(StableLeafError):
    """The limit leaf is not tangent to the stable eigendirection at the fixed point."""
