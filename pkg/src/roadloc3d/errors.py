"""Exception types raised across the toolkit.

Everything derives from :class:`RoadLoc3DError` so callers (and the CLI)
can distinguish validation failures from genuine I/O problems.
"""

from __future__ import annotations


class RoadLoc3DError(Exception):
    """Base class for all toolkit errors."""


class DegenerateProjection(RoadLoc3DError):
    """World point projects with a vanishing homogeneous denominator."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateBackprojection(RoadLoc3DError):
    """Image ray is parallel to the requested constant-height plane."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class InsufficientMarks(RoadLoc3DError):
    """Calibration needs at least one along-road and one across-road mark."""


class NoConvergence(RoadLoc3DError):
    """Calibration search finished above the residual tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class EmptyInput(RoadLoc3DError):
    """An operation that needs at least one element received none."""


class DegenerateRect(RoadLoc3DError):
    """Rectangle pair is unusable (zero enclosing diagonal or empty target)."""


class ShapeMismatch(RoadLoc3DError):
    """Grid arguments do not share the expected shape."""


class OutOfBounds(RoadLoc3DError):
    """Annotation coordinates fall outside the configured input resolution."""


class SingularHomography(RoadLoc3DError):
    """Perspective warp matrix is not invertible."""


class NonpositiveTime(RoadLoc3DError):
    """Throughput requires a strictly positive per-frame processing time."""


class NoGroundTruth(RoadLoc3DError):
    """Average precision is undefined without ground-truth objects."""


class NonpositiveGt(RoadLoc3DError):
    """Dimension precision requires strictly positive ground-truth sizes."""


class ParseError(RoadLoc3DError):
    """A data file could not be parsed; carries location diagnostics."""

    def __init__(self, message: str, *, path: str | None = None, field: str | None = None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if field is not None:
            detail = f"{detail} (field: {field})"
        super().__init__(detail)
        self.path = path
        self.field = field


class SchemaVersionError(RoadLoc3DError):
    """A data file declares a schema version this toolkit does not support."""

    def __init__(self, message: str, *, path: str | None = None, version: object = None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path
        self.version = version


class InvariantViolation(RoadLoc3DError):
    """An annotation violates a structural invariant; carries the field path."""

    def __init__(self, message: str, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field
