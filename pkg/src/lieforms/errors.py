"""Exception hierarchy shared by all modules."""


class LieFormsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(LieFormsError, ValueError):
    pass


class InvalidCoefficientError(LieFormsError, ValueError):
    pass


class GeometryError(LieFormsError):
    pass


class LocationError(GeometryError):
    """A point could not be located inside the mesh."""

    def __init__(self, point, message=None):
        self.point = tuple(float(c) for c in point)
        super().__init__(message or f"point {self.point} lies outside the mesh")


class TracingCycleError(GeometryError):
    pass


class SingularFlowError(GeometryError):
    pass


class PropagationError(LieFormsError):
    """Velocity evaluation produced non-finite values."""


class SolverError(LieFormsError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class SingularMatrixError(SolverError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
