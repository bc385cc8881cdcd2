"""Exception and warning classes used across modesub."""


class ModesubError(Exception):
    """Base class for all modesub errors."""


class InvalidInputError(ModesubError, ValueError):
    """An argument violates a documented precondition or type invariant."""


class ResolutionError(ModesubError, ValueError):
    """A sampling grid is too coarse for the requested feature."""


class TruncationError(ModesubError, ValueError):
    """A grid or Fock cutoff discards more weight than tolerated."""


class DegenerateInputError(ModesubError, ValueError):
    """The input carries no usable information (e.g. a zero matrix)."""


class HeraldError(ModesubError, ValueError):
    """A heralding event has zero probability for the given state."""


class BasisCoverageError(ModesubError, ValueError):
    """A mode leaks out of the target basis beyond the allowed threshold."""


class NoSignalError(ModesubError, ValueError):
    """Tomography data contain no signal above the dark level."""


class IncompleteProbeSetError(ModesubError, ValueError):
    """Tomography records do not contain the full standard probe set."""


class ModelMismatchError(ModesubError, ValueError):
    """Calibration data are inconsistent with the herald-rate model."""


class NotFittedError(ModesubError, AttributeError):
    """An estimator was used before ``fit``."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before meeting its tolerance."""


class LeakageWarning(UserWarning):
    """Weight escaped the span of a target basis."""
