"""Exception hierarchy shared by all modules."""


class CylinderError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(CylinderError, ValueError):
    """Non-finite entries, wrong types or otherwise malformed arguments."""


class DimensionError(InvalidInputError):
    """Operands are not conformable."""


class NotPSDError(CylinderError, ValueError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class RankError(CylinderError, ValueError):
    """A rank precondition (e.g. full row rank) is violated."""


class StructuralError(CylinderError):
    """A structural solvability condition fails (output regularity, condition on K, A, B, D).

    ``residual`` carries the measured relative residual for reporting.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InfeasibleError(CylinderError):
    """No strictly feasible point was found for a matrix inequality.

    ``details`` is an optional per-alpha table (list of dicts) used by the CLI.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or []


class UnboundedError(CylinderError):
    """Objective decreased past the unboundedness threshold."""


class LmiStructureError(CylinderError, ValueError):
    """Malformed affine expression or constraint."""


class NotRealizableError(CylinderError):
    """The controller cannot be realized on the true output (singular feedthrough loop)."""


class DivergedError(CylinderError):
    """Simulation produced a non-finite state."""

    def __init__(self, message, last_time):
        super().__init__(message)
        self.last_time = last_time
