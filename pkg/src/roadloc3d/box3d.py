"""3D vehicle bounding boxes: construction, projection, rectangles, IoU.

Boxes are axis-aligned in the world frame (vehicles travel parallel to the
road axis, which is the world y axis): width spans x, length spans y,
height spans z.  The eight corners follow a fixed ordering used everywhere
in the toolkit, including serialization:

    P1..P4  bottom face, counter-clockwise seen from above starting at
            (+w/2, -l/2),
    P5..P8  top face, same x/y pattern.

P2 is therefore the minimum corner (-w/2, -l/2, -h/2) relative to the
centroid; rebuilt boxes (predicted dimensions at a known ground-truth
anchor) grow from P2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import calib
from .errors import DegenerateRect, EmptyInput

# Corner offsets relative to the minimum corner P2, in units of (w, l, h).
UNIT_OFFSETS = np.array(
    [
        [1, 0, 0],  # P1
        [0, 0, 0],  # P2
        [0, 1, 0],  # P3
        [1, 1, 0],  # P4
        [1, 0, 1],  # P5
        [0, 0, 1],  # P6
        [0, 1, 1],  # P7
        [1, 1, 1],  # P8
    ],
    dtype=float,
)

# Wireframe edges over the ordering above: bottom ring, top ring, verticals.
BOX_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)


@dataclass(frozen=True)
class Dimension3D:
    """Vehicle length, width, height in meters."""

    l: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"dimensions must be positive, got {(self.l, self.w, self.h)}")
        if self.l < self.w:
            warnings.warn(
                "vehicle length is smaller than width; check the l/w order",
                stacklevel=2,
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.w, self.h])


@dataclass(frozen=True)
class Box3D:
    """A vehicle as a world centroid plus dimensions.

    Ground vehicles have centroid z ~ h/2; this is not enforced (boxes are
    also used as plain geometric volumes), use :meth:`grounded` to check.
    """

    centroid: tuple[float, float, float]
    dim: Dimension3D
    class_id: int = 0

    def grounded(self, tol: float = 1e-6) -> bool:
        return abs(self.centroid[2] - self.dim.h / 2) <= tol

    def min_corner(self) -> np.ndarray:
        return np.asarray(self.centroid) - self.dim.as_array()[[1, 0, 2]] / 2

    def max_corner(self) -> np.ndarray:
        return np.asarray(self.centroid) + self.dim.as_array()[[1, 0, 2]] / 2

    def volume(self) -> float:
        return self.dim.l * self.dim.w * self.dim.h


class VertexSet:
    """The eight ordered world corners of a box (see module docstring)."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.shape != (8, 3):
            raise ValueError(f"vertex set must be 8x3, got {pts.shape}")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts

    def edge_lengths(self) -> tuple[float, float, float]:
        """(w, l, h) recovered from the P1-P2, P2-P3, P2-P6 edges."""
        p = self.points
        return (
            float(np.linalg.norm(p[0] - p[1])),
            float(np.linalg.norm(p[2] - p[1])),
            float(np.linalg.norm(p[5] - p[1])),
        )

    def is_axis_aligned(self, tol: float = 1e-9) -> bool:
        p = self.points
        return (
            np.allclose(p[0] - p[1], [p[0, 0] - p[1, 0], 0, 0], atol=tol)
            and np.allclose(p[2] - p[1], [0, p[2, 1] - p[1, 1], 0], atol=tol)
            and np.allclose(p[5] - p[1], [0, 0, p[5, 2] - p[1, 2]], atol=tol)
        )


def gt_vertices(box: Box3D) -> VertexSet:
    """Eight world corners of a box: centroid +- half dimensions."""
    half = np.array([box.dim.w, box.dim.l, box.dim.h]) / 2
    base = np.asarray(box.centroid) - half
    return VertexSet(base + UNIT_OFFSETS * (2 * half))


def proj_vertices(p2_anchor: np.ndarray, dim: Dimension3D) -> VertexSet:
    """Eight world corners of a box rebuilt from ``dim`` at a known P2 corner.

    When ``dim`` equals the anchor box's own dimensions this reproduces
    :func:`gt_vertices` of that box exactly.
    """
    anchor = np.asarray(p2_anchor, dtype=float)
    return VertexSet(anchor + UNIT_OFFSETS * np.array([dim.w, dim.l, dim.h]))


def project_box(
    proj: calib.ProjectionMatrix | np.ndarray, vertices: VertexSet
) -> np.ndarray:
    """Project the eight corners to image pixels; returns an (8, 2) array."""
    return calib.world_to_image(proj, vertices.points)


@dataclass(frozen=True)
class Rect2D:
    """Axis-aligned image rectangle (pixels)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("rectangle min corner must not exceed max corner")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max])


def min_external_rect(points: np.ndarray) -> Rect2D:
    """Axis-aligned bounding rectangle of one or more image points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise EmptyInput("cannot bound an empty point set")
    return Rect2D(
        float(pts[:, 0].min()),
        float(pts[:, 1].min()),
        float(pts[:, 0].max()),
        float(pts[:, 1].max()),
    )


def _overlap_1d(lo1: float, hi1: float, lo2: float, hi2: float) -> float:
    return max(0.0, min(hi1, hi2) - max(lo1, lo2))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU of two world-axis-aligned boxes; 0 for a zero-volume union."""
    lo_a, hi_a = a.min_corner(), a.max_corner()
    lo_b, hi_b = b.min_corner(), b.max_corner()
    inter = 1.0
    vol_a = 1.0
    vol_b = 1.0
    for k in range(3):
        inter *= _overlap_1d(lo_a[k], hi_a[k], lo_b[k], hi_b[k])
        vol_a *= hi_a[k] - lo_a[k]
        vol_b *= hi_b[k] - lo_b[k]
    union = vol_a + vol_b - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou2d(a: Rect2D, b: Rect2D) -> float:
    """Area IoU of two image rectangles; 0 for a zero-area union."""
    inter = _overlap_1d(a.x_min, a.x_max, b.x_min, b.x_max) * _overlap_1d(
        a.y_min, a.y_max, b.y_min, b.y_max
    )
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def ciou_loss(pred: Rect2D, gt: Rect2D) -> float:
    """Complete-IoU loss between rectangles: 1 - IoU + rho^2/c^2 + alpha*v.

    rho is the center distance, c the enclosing-box diagonal, v the
    normalized aspect-ratio gap and alpha = v / (1 - IoU + v).  Zero exactly
    when the rectangles coincide.
    """
    if gt.area <= 0:
        raise DegenerateRect("target rectangle must have positive area")
    cw = max(pred.x_max, gt.x_max) - min(pred.x_min, gt.x_min)
    ch = max(pred.y_max, gt.y_max) - min(pred.y_min, gt.y_min)
    c2 = cw * cw + ch * ch
    if c2 <= 0:
        raise DegenerateRect("enclosing box of the rectangle pair has zero diagonal")
    iou = iou2d(pred, gt)
    (px, py), (gx, gy) = pred.center, gt.center
    rho2 = (px - gx) ** 2 + (py - gy) ** 2
    v = 0.0
    if pred.height > 0:
        gap = math.atan(gt.width / gt.height) - math.atan(pred.width / pred.height)
        v = 4.0 / math.pi**2 * gap * gap
    alpha = v / ((1.0 - iou) + v) if v > 0 else 0.0
    return (1.0 - iou) + rho2 / c2 + alpha * v
