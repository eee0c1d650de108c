"""Exception types shared across the package."""


class GcnFuseError(Exception):
    """Base class for all package errors."""


class DatasetFormatError(GcnFuseError):
    """A dataset file could not be parsed or violates a record invariant."""


class ModelFormatError(GcnFuseError):
    """A model file could not be parsed or violates the layer schema."""


class DimensionMismatchError(GcnFuseError):
    """Operands have incompatible shapes."""


class InvalidSpecError(GcnFuseError):
    """A generator/config spec is infeasible or out of range."""


class SolverError(GcnFuseError):
    """An optimal-transport solver was given invalid input."""


class NumericalError(SolverError):
    """A solver hit NaN/overflow that the stabilized path could not absorb."""
