"""Exception hierarchy shared by every module of the package."""


class GeoWienerError(Exception):
    """Base class for all library errors."""


class DomainError(GeoWienerError, ValueError):
    """A point, time or parameter lies outside the domain of an operation."""


class UsageError(GeoWienerError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class IntegrationError(GeoWienerError, RuntimeError):
    """The adaptive ODE integrator could not reach the requested time."""

    def __init__(self, message, reached_time, segment=None):
        super().__init__(message)
        self.reached_time = reached_time
        self.segment = segment


class DegenerateFrameError(GeoWienerError, ValueError):
    """Frame columns are (numerically) linearly dependent."""


class DegenerateMetricError(GeoWienerError, ArithmeticError):
    """A Gram matrix failed to be positive definite."""

    def __init__(self, message, smallest_eigenvalue):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class NumericalError(GeoWienerError, ArithmeticError):
    """Non-finite values or an unusable finite-difference step."""


class NoOracleError(GeoWienerError, NotImplementedError):
    """No heat-kernel ground truth is available for the manifold."""


class AccuracyError(GeoWienerError, ArithmeticError):
    """A truncated series or quadrature did not meet its tolerance."""

    def __init__(self, message, achieved_bound):
        super().__init__(message)
        self.achieved_bound = achieved_bound


class CostCapError(GeoWienerError, ValueError):
    """The requested discretisation exceeds the configured cost cap."""

    def __init__(self, message, suggested_cap):
        super().__init__(message)
        self.suggested_cap = suggested_cap


class ConfigurationError(GeoWienerError, ValueError):
    """Invalid run configuration or unsupported option."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
