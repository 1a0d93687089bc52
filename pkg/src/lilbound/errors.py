"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific type that applies rather than bare ValueError.
"""


class LilboundError(Exception):
    """Base class for all package errors."""


class DomainError(LilboundError, ValueError):
    """An argument lies outside the mathematical or configured domain."""


class NonconvergenceError(LilboundError, RuntimeError):
    """An iterative solver hit its iteration cap above tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class UnreachableValueError(DomainError):
    """A requested function value exceeds the supremum on the domain.

    Only possible for table-backed phi functions, whose tabulated range
    is finite below the open right endpoint.
    """


class CenteringError(DomainError):
    """Sample mean is too far from zero for a centered-variable estimator."""


class CalibrationError(LilboundError, RuntimeError):
    """Constant calibration failed in a way that signals an implementation bug."""
