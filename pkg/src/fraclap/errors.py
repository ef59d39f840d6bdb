"""Exception hierarchy shared across the package."""


class FraclapError(Exception):
    """Base class for all package errors."""


class DomainError(FraclapError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class SingularityError(DomainError):
    """Evaluation requested on a singular locus (e.g. the kernel diagonal)."""


class CapacityError(FraclapError, ValueError):
    """A requested size exceeds what the discretization can represent."""


class TopologyError(FraclapError, ValueError):
    """Mesh connectivity violates the closed-manifold requirement."""


class GeometryError(FraclapError, ValueError):
    """Degenerate geometry (zero-area triangle, zero length, ...)."""


class AccuracyError(FraclapError, RuntimeError):
    """A computation could not reach its declared tolerance.

    Carries the achieved bound and, when available, a suggestion for the
    parameter change that would fix it plus any raw diagnostic data.
    """

    def __init__(self, message, bound=None, suggestion=None, data=None):
        super().__init__(message)
        self.bound = bound
        self.suggestion = suggestion
        self.data = data


class ConfigError(FraclapError, ValueError):
    """Experiment configuration failed validation."""


class SchemaMismatchError(FraclapError):
    """Report and golden file (or tolerance manifest) are incompatible."""
