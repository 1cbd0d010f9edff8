"""Exception classes shared across the package."""


class LevelFlowError(Exception):
    """Base class for all errors raised by this package."""


class NoInterface(LevelFlowError):
    """Field has uniform sign: there is no zero crossing to work with."""


class ReinitNonConvergence(LevelFlowError):
    """Fast sweeping failed the gradient criterion after the iteration cap."""


class OutOfBand(LevelFlowError):
    """Grid index outside the valid stencil region."""


class DegenerateGradient(LevelFlowError):
    """Gradient magnitude below the degeneracy floor at the requested cell."""


class ShapeOutOfDomain(LevelFlowError):
    """Shape does not fit into the grid with the required margin."""


class EmptyLevel(LevelFlowError):
    """Requested level set misses the grid entirely."""


class CFLViolation(LevelFlowError):
    """Requested time step exceeds the stability bound."""


class TimeOutOfRange(LevelFlowError):
    """Requested time outside the recorded track range."""


class DomainMarginError(LevelFlowError):
    """Interface came closer to the domain boundary than the safety margin."""


class NonMonotoneSweep(LevelFlowError):
    """A cell changed sign more than once where monotone sweeping is required."""


class WindowOutOfRange(LevelFlowError):
    """Rescaling or density window does not fit inside the track."""


class NotDisjointAtStart(LevelFlowError):
    """Comparison flow intersects the track interface at its start time."""


class PastExtinction(LevelFlowError):
    """Analytic comparison flow no longer exists at the requested time."""


class LevelNotPresent(LevelFlowError):
    """Requested level value not attained on a snapshot."""


class NoRegularCells(LevelFlowError):
    """Spacetime window contains no usable regular interface cells."""


class EmptyRegion(LevelFlowError):
    """Operation requires a nonempty cell set."""


class NotApplicable(LevelFlowError):
    """Diagnostic undefined for this shape kind (for example curve-only shapes)."""


class ConfigError(LevelFlowError):
    """Run configuration failed to parse or validate."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
