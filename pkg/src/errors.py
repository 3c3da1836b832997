"""Exception hierarchy for ncm-fe."""

from __future__ import annotations


class NcmFeError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(NcmFeError, ValueError):
    """Array lengths or shapes that must agree do not."""


class ModelDefinitionError(NcmFeError, ValueError):
    """A kinematic config or weight set is internally inconsistent."""


class KinematicDomainError(NcmFeError):
    """A deformation gradient is inverted or degenerate (det F <= MIN_JACOBIAN)."""

    def __init__(self, message: str, index: int = 0) -> None:
        super().__init__(message)
        self.index = index


class NetworkDomainError(NcmFeError):
    """An inner network was evaluated outside its domain."""

    def __init__(self, message: str, index: int = 0) -> None:
        super().__init__(message)
        self.index = index


class BatchEvaluationError(NcmFeError):
    """A constitutive evaluation failed at one point of a material batch."""

    def __init__(self, index: int, cause: Exception) -> None:
        super().__init__(f"material point {index}: {cause}")
        self.index = index
        self.cause = cause


class WeightFileError(NcmFeError):
    """A weight file failed validation; ``field_path`` locates the bad field."""

    def __init__(self, field_path: str, message: str) -> None:
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field_path = field_path


class KnotVectorError(NcmFeError, ValueError):
    """An ICKAN knot vector is non-uniform or too short for the spline order."""


class MeshError(NcmFeError):
    """Malformed mesh or boundary-condition input."""


class ElementInversionError(NcmFeError):
    """Constitutive evaluation failed at quadrature point ``qp`` of ``element``."""

    def __init__(self, element: int, qp: int, cause: Exception, worker: int | None = None) -> None:
        where = f"element {element}, quadrature point {qp}"
        if worker is not None:
            where = f"worker {worker}: {where}"
        super().__init__(f"{where}: {cause}")
        self.element = element
        self.qp = qp
        self.worker = worker
        self.cause = cause


class ConvergenceError(NcmFeError):
    """Newton iterations failed to converge after all step-halving retries."""

    def __init__(self, message: str, load_factor: float) -> None:
        super().__init__(message)
        self.load_factor = load_factor


class CgBreakdownError(NcmFeError):
    """Conjugate gradients cannot proceed (non-positive diagonal or curvature)."""
