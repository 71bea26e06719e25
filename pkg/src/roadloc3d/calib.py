"""Single-vanishing-point roadside camera model and its world/image transforms.

Coordinate conventions (all frames right-handed):

  World frame:
    - origin at the camera's foot point on the road plane,
    - y along the traffic direction, z up, ground plane z = 0,
    - units: meters.

  Image frame:
    - origin at the top-left corner, u right, v down, units: pixels.

The camera sits at world (0, 0, h), tilted down by ``phi`` and panned by
``theta``; roll is fixed at zero (a roll can be removed by rotating the
image and does not change the model).  The full world-to-image map is the
3x4 matrix

    H = K * R * T

with K the pinhole intrinsics, R the tilt/pan rotation, and T translating
the world down by the camera height.  A world point maps to pixels through
the projective division of ``H @ [x, y, z, 1]``; the inverse map exists per
constant-height plane z = const and is obtained by solving the resulting
2x2 linear system.

Calibration itself follows the one-vanishing-point scheme with known road
mark lengths: the vanishing point of the traffic direction pins the tilt
and pan for any candidate focal length, along-road marks of known length
pin the camera height, and a 1-D search over the focal length minimizes
the squared relative length error over all marks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateBackprojection,
    DegenerateProjection,
    InsufficientMarks,
    NoConvergence,
)

# Homogeneous denominators below this magnitude, relative to the size of
# the terms that form them, are treated as degenerate.  The relative form
# keeps the test meaningful at scene scale, where e.g. the backprojection
# determinant of an exact horizon pixel only cancels to ~1e-10 in absolute
# double-precision terms.
DEGENERACY_TOL = 1e-12

ALONG_ROAD = "along-road"
ACROSS_ROAD = "across-road"


@dataclass(frozen=True)
class CalibrationParams:
    """Pinhole camera parameters of the roadside model.

    f is the focal length in pixels, phi the downward tilt and theta the
    pan (both radians), h the camera height in meters, (cx, cy) the
    principal point in pixels.
    """

    f: float
    phi: float
    theta: float
    h: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (self.f > 0):
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not (self.h > 0):
            raise ValueError(f"camera height must be positive, got {self.h}")
        if not (0 < self.phi < math.pi / 2):
            raise ValueError(f"tilt angle must lie in (0, pi/2), got {self.phi}")
        if not (abs(self.theta) < math.pi / 2):
            raise ValueError(f"pan angle must lie in (-pi/2, pi/2), got {self.theta}")


@dataclass(frozen=True)
class VanishingPoint:
    """Image point where the traffic-direction world lines converge."""

    u0: float
    v0: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u0) and math.isfinite(self.v0)):
            raise ValueError("vanishing point must be finite")


@dataclass(frozen=True)
class GroundMark:
    """A road mark of known world length, measured between two image points.

    ``kind`` is :data:`ALONG_ROAD` (e.g. lane dashes) or :data:`ACROSS_ROAD`
    (e.g. lane width); the two constrain the focal length / height pair in
    complementary ways.
    """

    endpoints: tuple[tuple[float, float], tuple[float, float]]
    world_length: float
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in (ALONG_ROAD, ACROSS_ROAD):
            raise ValueError(f"unknown mark kind {self.kind!r}")
        if not (self.world_length > 0):
            raise ValueError("mark world length must be positive")
        (u1, v1), (u2, v2) = self.endpoints
        if u1 == u2 and v1 == v2:
            raise ValueError("mark endpoints must be distinct")


class ProjectionMatrix:
    """3x4 world-to-image projective map (applied with a per-point scale)."""

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=float)
        if m.shape != (3, 4):
            raise ValueError(f"projection matrix must be 3x4, got {m.shape}")
        if np.linalg.matrix_rank(m) != 3:
            raise ValueError("projection matrix must have rank 3")
        m = m.copy()
        m.setflags(write=False)
        self.matrix = m

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"ProjectionMatrix({self.matrix!r})"


def _as_matrix(proj: ProjectionMatrix | np.ndarray) -> np.ndarray:
    if isinstance(proj, ProjectionMatrix):
        return proj.matrix
    return np.asarray(proj, dtype=float)


def build_intrinsics(params: CalibrationParams) -> np.ndarray:
    """Intrinsic matrix K = [[f, 0, cx], [0, f, cy], [0, 0, 1]]."""
    return np.array(
        [
            [params.f, 0.0, params.cx],
            [0.0, params.f, params.cy],
            [0.0, 0.0, 1.0],
        ]
    )


def build_rotation(phi: float, theta: float) -> np.ndarray:
    """World-to-camera rotation: tilt by phi + pi/2 about x after panning by theta about z."""
    cp, sp = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [ct, -st, 0.0],
            [-sp * st, -sp * ct, -cp],
            [cp * st, cp * ct, -sp],
        ]
    )


def build_translation(h: float) -> np.ndarray:
    """3x4 translation moving the world origin to the camera foot at height h."""
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, -h],
        ]
    )


def build_projection(params: CalibrationParams) -> ProjectionMatrix:
    """Compose the full world-to-image map H = K R T."""
    K = build_intrinsics(params)
    R = build_rotation(params.phi, params.theta)
    T = build_translation(params.h)
    return ProjectionMatrix(K @ R @ T)


def world_to_image(
    proj: ProjectionMatrix | np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Project world points (..., 3) in meters to image pixels (..., 2).

    Raises :class:`DegenerateProjection` (with the offending index for
    batched input) when a point lies on the camera plane.
    """
    m = _as_matrix(proj)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"world points must have 3 components, got shape {pts.shape}")
    hom = np.concatenate([pts, np.ones((*pts.shape[:-1], 1))], axis=-1)
    q = hom @ m.T
    den = q[..., 2]
    scale = np.abs(hom) @ np.abs(m[2]) + np.finfo(float).tiny
    bad = np.abs(den) < DEGENERACY_TOL * scale
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise DegenerateProjection(
            f"point {pts[idx]} lies on the camera plane (denominator ~ 0)", index=idx
        )
    uv = q[..., :2] / den[..., None]
    return uv[0] if single else uv


def image_to_world(
    proj: ProjectionMatrix | np.ndarray, points: np.ndarray, z: float
) -> np.ndarray:
    """Backproject image pixels (..., 2) onto the plane of known height z.

    Returns world points (..., 3) with the given z passed through.  Raises
    :class:`DegenerateBackprojection` for pixels whose ray is parallel to
    the plane (e.g. the horizon when z = 0).
    """
    m = _as_matrix(proj)
    (h11, h12, h13, h14), (h21, h22, h23, h24), (h31, h32, h33, h34) = m
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 2:
        raise ValueError(f"image points must have 2 components, got shape {pts.shape}")
    u, v = pts[..., 0], pts[..., 1]

    b1 = u * (h33 * z + h34) - (h13 * z + h14)
    b2 = v * (h33 * z + h34) - (h23 * z + h24)
    a11 = h11 - h31 * u
    a12 = h12 - h32 * u
    a21 = h21 - h31 * v
    a22 = h22 - h32 * v
    det = a11 * a22 - a12 * a21
    # |det| / ||A||_F^2 ~ sigma_min / sigma_max for near-singular systems.
    scale = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22 + np.finfo(float).tiny
    bad = np.abs(det) < DEGENERACY_TOL * scale
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise DegenerateBackprojection(
            f"pixel {pts[idx]} backprojects parallel to the z={z} plane", index=idx
        )
    x = (b1 * a22 - b2 * a12) / det
    y = (-b1 * a21 + b2 * a11) / det
    out = np.stack([x, y, np.full_like(x, float(z))], axis=-1)
    return out[0] if single else out


def vp_from_params(params: CalibrationParams) -> VanishingPoint:
    """Image of the point at infinity along the traffic direction (0, 1, 0)."""
    denom = math.cos(params.phi) * math.cos(params.theta)
    if abs(denom) < DEGENERACY_TOL:
        raise DegenerateProjection("traffic direction is parallel to the image plane")
    u0 = params.cx - params.f * math.tan(params.theta) / math.cos(params.phi)
    v0 = params.cy - params.f * math.tan(params.phi)
    return VanishingPoint(u0, v0)


def angles_from_vp(
    vp: VanishingPoint, f: float, cx: float, cy: float
) -> tuple[float, float]:
    """Invert :func:`vp_from_params` for a known focal length.

    Returns (phi, theta); exact for any parameters produced by the forward
    map.
    """
    phi = math.atan2(cy - vp.v0, f)
    theta = math.atan2((cx - vp.u0) * math.cos(phi), f)
    return phi, theta


def mirror_matrix(width: float) -> np.ndarray:
    """3x3 image transform mirroring u about the image center: u -> width-1-u.

    Composing it onto a projection (``transform_projection``) yields the
    calibration that matches horizontally flipped frames.
    """
    return np.array(
        [
            [-1.0, 0.0, width - 1.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )


def scale_matrix(
    from_size: tuple[float, float], to_size: tuple[float, float]
) -> np.ndarray:
    """3x3 image transform rescaling (width, height) anisotropically."""
    sx = to_size[0] / from_size[0]
    sy = to_size[1] / from_size[1]
    return np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])


def transform_projection(
    image_transform: np.ndarray, proj: ProjectionMatrix | np.ndarray
) -> ProjectionMatrix:
    """Compose a 3x3 image-space transform onto a projection: H' = M H."""
    m = np.asarray(image_transform, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"image transform must be 3x3, got {m.shape}")
    return ProjectionMatrix(m @ _as_matrix(proj))


@dataclass(frozen=True)
class VwlSolution:
    """Result of the one-vanishing-point calibration solve."""

    params: CalibrationParams
    residual: float


def _mark_lengths_unit_height(
    f: float,
    phi: float,
    theta: float,
    cx: float,
    cy: float,
    marks: Sequence[GroundMark],
) -> np.ndarray | None:
    """Backprojected ground length of each mark for a camera of height 1.

    Lengths scale linearly with the camera height, so the true height is a
    single scale factor fitted afterwards.  Returns None when any endpoint
    is degenerate for the candidate parameters.
    """
    try:
        params = CalibrationParams(f, phi, theta, 1.0, cx, cy)
    except ValueError:
        return None
    m = build_projection(params)
    pts = np.array([[mk.endpoints[0], mk.endpoints[1]] for mk in marks], dtype=float)
    try:
        world = image_to_world(m, pts.reshape(-1, 2), z=0.0).reshape(-1, 2, 3)
    except DegenerateBackprojection:
        return None
    return np.linalg.norm(world[:, 0, :2] - world[:, 1, :2], axis=-1)


def _score_focal(
    f: float,
    vp: VanishingPoint,
    marks: Sequence[GroundMark],
    along_idx: np.ndarray,
    lengths: np.ndarray,
    cx: float,
    cy: float,
) -> tuple[float, float, float, float]:
    """Residual of a candidate focal length; returns (score, phi, theta, h)."""
    phi, theta = angles_from_vp(vp, f, cx, cy)
    unit = _mark_lengths_unit_height(f, phi, theta, cx, cy, marks)
    if unit is None or np.any(~np.isfinite(unit)) or np.any(unit <= 0):
        return math.inf, phi, theta, math.nan
    # Least-squares height over along-road marks: minimize sum((h*a_i - 1)^2)
    # with a_i the unit-height length relative to the true length.
    a = unit[along_idx] / lengths[along_idx]
    h = float(np.sum(a) / np.sum(a * a))
    if not (h > 0 and math.isfinite(h)):
        return math.inf, phi, theta, math.nan
    rel = (h * unit - lengths) / lengths
    return float(np.sum(rel * rel)), phi, theta, h


def solve_vwl(
    vp: VanishingPoint,
    marks: Sequence[GroundMark],
    image_size: tuple[int, int],
    *,
    grid_points: int = 200,
    f_range: tuple[float, float] | None = None,
    residual_tol: float = 1e-4,
) -> VwlSolution:
    """Solve the camera parameters from a vanishing point and ground marks.

    The vanishing point fixes (phi, theta) for any candidate focal length
    and the along-road marks fix the height, reducing the problem to a 1-D
    search over f: a coarse log-spaced grid over ``f_range`` (default
    0.2..10 image widths) followed by golden-section refinement of the
    bracketing interval.  The score is the summed squared relative length
    error over all marks.

    Raises :class:`InsufficientMarks` without at least one mark of each
    kind, and :class:`NoConvergence` when the best residual stays above
    ``residual_tol``.
    """
    marks = list(marks)
    kinds = [mk.kind for mk in marks]
    if ALONG_ROAD not in kinds or ACROSS_ROAD not in kinds:
        raise InsufficientMarks(
            "need at least one along-road and one across-road mark, got "
            f"{kinds.count(ALONG_ROAD)} along / {kinds.count(ACROSS_ROAD)} across"
        )
    width, height = image_size
    cx, cy = width / 2.0, height / 2.0
    if f_range is None:
        f_range = (0.2 * width, 10.0 * width)

    along_idx = np.array([k == ALONG_ROAD for k in kinds])
    lengths = np.array([mk.world_length for mk in marks])

    grid = np.geomspace(f_range[0], f_range[1], grid_points)
    scores = np.array(
        [_score_focal(f, vp, marks, along_idx, lengths, cx, cy)[0] for f in grid]
    )
    best = int(np.argmin(scores))
    if not math.isfinite(scores[best]):
        raise NoConvergence("no candidate focal length is feasible", residual=math.inf)

    # Golden-section refinement inside the bracketing grid interval.
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid_points - 1)]
    invphi = (math.sqrt(5.0) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _score_focal(c, vp, marks, along_idx, lengths, cx, cy)[0]
    fd = _score_focal(d, vp, marks, along_idx, lengths, cx, cy)[0]
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _score_focal(c, vp, marks, along_idx, lengths, cx, cy)[0]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _score_focal(d, vp, marks, along_idx, lengths, cx, cy)[0]
        if (b - a) <= 1e-9 * max(1.0, a):
            break
    f_best = (a + b) / 2
    score, phi, theta, h = _score_focal(f_best, vp, marks, along_idx, lengths, cx, cy)
    if score > residual_tol:
        raise NoConvergence(
            f"calibration residual {score:.3e} exceeds tolerance {residual_tol:.3e}",
            residual=score,
        )
    return VwlSolution(CalibrationParams(f_best, phi, theta, h, cx, cy), score)
