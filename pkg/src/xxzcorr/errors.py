"""Exception types shared across the package."""


class XXZCorrError(Exception):
    """Base class for all package errors."""


class ConfigurationError(XXZCorrError):
    """A parameter violates its admissible domain; message names the bound."""


class UsageError(XXZCorrError):
    """API misuse (length mismatches, wrong call order)."""


class SingularityError(XXZCorrError):
    """Evaluation requested at (or too close to) a singular point."""


class EdgeError(SingularityError):
    """Point too close to the integration contour or a region boundary."""


class DomainError(XXZCorrError):
    """Point lies outside the region where an operation is defined."""


class NonConvergenceError(XXZCorrError):
    """Iteration failed to reach tolerance; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class BranchCutError(XXZCorrError):
    """log(1 + a) lost track of its branch (near-zero 1 + a or a > pi jump)."""


class LinearSolveError(XXZCorrError):
    """Singular or badly conditioned dense system."""


class DegeneracyError(XXZCorrError):
    """Dominant eigenvalue is not isolated enough."""


class NormalizationError(XXZCorrError):
    """A normalizing scalar product is numerically zero."""


class CapabilityError(XXZCorrError):
    """Request exceeds an implemented size limit (e.g. too many sites)."""


class ExtrapolationError(XXZCorrError):
    """Richardson extrapolation spread exceeds the requested tolerance."""


class ConsistencyError(XXZCorrError):
    """Two independent evaluation routes disagree beyond the cross tolerance."""
