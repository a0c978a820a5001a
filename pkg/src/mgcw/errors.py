"""Exception hierarchy for the mgcw package."""


class MgcwError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(MgcwError):
    """Invalid model parameters (shapes, simplex constraint, definiteness)."""


class DimensionMismatchError(MgcwError):
    """Configuration or order vector inconsistent with the model."""


class EnumerationCapError(MgcwError):
    """Exact enumeration requested beyond the configured spin cap."""


class UnsupportedCaseError(MgcwError):
    """Requested computation outside the supported parameter range."""


class RegimeError(MgcwError):
    """Operation called on a model in the wrong temperature regime."""


class RootFindError(MgcwError):
    """A required root or minimum could not be located."""


class QuadratureError(MgcwError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class ConditioningError(MgcwError):
    """Too few samples satisfy the conditioning event."""
