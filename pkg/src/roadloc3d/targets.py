"""Training-target grids: encode annotations, decode detections, fuse maps.

The network side of the pipeline is modeled purely through its output
grids at 1/S of the input resolution (S = 4 by default):

  mc   class heatmap, one channel per vehicle type, Gaussian peaks of
       exactly 1.0 at each annotated centroid cell,
  mco  sub-cell centroid offset in [0, 1),
  mv   the eight box corners as map-frame coordinates (pixel / S),
       interleaved (u1, v1, ..., u8, v8),
  ms   vehicle dimensions (l, w, h) in meters.

Decoding inverts the encoding: 3x3 local maxima of the heatmap become
detections, regression channels are read at the peak cell.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import calib
from .box3d import Box3D, Dimension3D, min_external_rect
from .errors import OutOfBounds, ShapeMismatch

logger = logging.getLogger(__name__)

GRID_SIDECAR_VERSION = 1


@dataclass(frozen=True)
class GridConfig:
    """Input resolution, stride and class count of the target grids."""

    input_width: int = 512
    input_height: int = 512
    stride: int = 4
    num_classes: int = 3

    def __post_init__(self) -> None:
        if self.input_width % self.stride or self.input_height % self.stride:
            raise ValueError("input resolution must be divisible by the stride")

    @property
    def grid_width(self) -> int:
        return self.input_width // self.stride

    @property
    def grid_height(self) -> int:
        return self.input_height // self.stride


@dataclass
class TargetMaps:
    """The four target/prediction grids plus their stride."""

    mc: np.ndarray
    mco: np.ndarray
    mv: np.ndarray
    ms: np.ndarray
    stride: int = 4

    def __post_init__(self) -> None:
        h, w = self.mc.shape[:2]
        for name, arr, ch in (("mco", self.mco, 2), ("mv", self.mv, 16), ("ms", self.ms, 3)):
            if arr.shape != (h, w, ch):
                raise ShapeMismatch(
                    f"{name} must be {(h, w, ch)} to match mc, got {arr.shape}"
                )

    @property
    def num_classes(self) -> int:
        return self.mc.shape[2]

    def peak_mask(self) -> np.ndarray:
        """Boolean (H, W) mask of cells holding an exact heatmap peak."""
        return (self.mc == 1.0).any(axis=2)

    def perfect_prediction(self) -> "TargetMaps":
        """The grids an ideal detector would output for these targets.

        Regression channels equal the targets; the heatmap is the binary
        peak map (1 at annotated cells, 0 elsewhere), which is the
        minimizer of the classification loss.  The Gaussian shoulder cells
        of the target itself are not a loss minimum: they are down-weighted
        negatives, so echoing them back as predictions leaves a residual.
        """
        return TargetMaps(
            mc=(self.mc == 1.0).astype(float),
            mco=self.mco.copy(),
            mv=self.mv.copy(),
            ms=self.ms.copy(),
            stride=self.stride,
        )


@dataclass
class Detection:
    """A decoded vehicle: image-space centroid/corners plus metric dimensions."""

    class_id: int
    confidence: float
    centroid_image: np.ndarray
    vertices_image: np.ndarray
    dim: Dimension3D


@dataclass(frozen=True)
class FusionWeights:
    """Per-level weights of the multi-scale fusion; must sum to one."""

    weights: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.weights) != 5:
            raise ValueError("expected exactly five fusion weights")
        if any(w < 0 for w in self.weights):
            raise ValueError("fusion weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"fusion weights must sum to 1, got {sum(self.weights)}")


DEFAULT_FUSION_WEIGHTS = FusionWeights((0.5, 0.2, 0.1, 0.1, 0.1))


def gaussian_radius(width: float, height: float, min_overlap: float = 0.7) -> float:
    """Largest corner displacement (in cells) keeping rect overlap >= min_overlap.

    Three displacement modes bound the overlap; each reduces to a quadratic
    in the radius, and the smallest root wins.
    """
    w, h = float(width), float(height)

    a1, b1 = 1.0, h + w
    c1 = w * h * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 - math.sqrt(b1 * b1 - 4 * a1 * c1)) / (2 * a1)

    a2, b2 = 4.0, 2 * (h + w)
    c2 = (1 - min_overlap) * w * h
    r2 = (b2 - math.sqrt(b2 * b2 - 4 * a2 * c2)) / (2 * a2)

    a3, b3 = 4.0 * min_overlap, -2 * min_overlap * (h + w)
    c3 = (min_overlap - 1) * w * h
    r3 = (b3 + math.sqrt(b3 * b3 - 4 * a3 * c3)) / (2 * a3)

    return min(r1, r2, r3)


def gaussian_sigma(
    width: float, height: float, *, stride: int = 1, min_overlap: float = 0.7
) -> float:
    """Heatmap kernel spread for an object of the given image size in pixels.

    The size is converted to grid cells via ``stride``; sigma is one third
    of :func:`gaussian_radius`, floored at 2/3 so tiny objects still leave
    a usable footprint.
    """
    if not (width > 0 and height > 0):
        raise ValueError("object size must be positive")
    r = gaussian_radius(width / stride, height / stride, min_overlap)
    return max(r / 3.0, 2.0 / 3.0)


def encode(annotations: Sequence, grid: GridConfig = GridConfig()) -> TargetMaps:
    """Encode annotations (input-resolution image coordinates) into target grids.

    The heatmap combines per-object Gaussians cellwise by max, preserving
    an exact peak of 1.0 at every annotated centroid cell.  Regression
    channels are written at the peak cell only; when two centroids collide
    in one cell the larger object keeps the regression targets (both still
    contribute to the heatmap) and a warning is logged.
    """
    hs, ws = grid.grid_height, grid.grid_width
    mc = np.zeros((hs, ws, grid.num_classes))
    mco = np.zeros((hs, ws, 2))
    mv = np.zeros((hs, ws, 16))
    ms = np.zeros((hs, ws, 3))
    owner_area = np.full((hs, ws), -1.0)

    ys, xs = np.mgrid[0:hs, 0:ws]
    for k, ann in enumerate(annotations):
        u, v = float(ann.centroid_image[0]), float(ann.centroid_image[1])
        if not (0 <= u < grid.input_width and 0 <= v < grid.input_height):
            raise OutOfBounds(
                f"annotation {k} centroid ({u:.1f}, {v:.1f}) outside the "
                f"{grid.input_width}x{grid.input_height} input"
            )
        if not (0 <= ann.class_id < grid.num_classes):
            raise OutOfBounds(f"annotation {k} class {ann.class_id} out of range")
        rect = min_external_rect(ann.vertices_image)
        sigma = gaussian_sigma(
            max(rect.width, 1e-6), max(rect.height, 1e-6), stride=grid.stride
        )
        cell_x, cell_y = int(u // grid.stride), int(v // grid.stride)
        g = np.exp(-((xs - cell_x) ** 2 + (ys - cell_y) ** 2) / (2 * sigma * sigma))
        np.maximum(mc[:, :, ann.class_id], g, out=mc[:, :, ann.class_id])
        mc[cell_y, cell_x, ann.class_id] = 1.0

        area = rect.width * rect.height
        if owner_area[cell_y, cell_x] >= 0:
            logger.warning(
                "two centroids collide in cell (%d, %d); keeping the larger object's "
                "regression targets",
                cell_x,
                cell_y,
            )
            if area <= owner_area[cell_y, cell_x]:
                continue
        owner_area[cell_y, cell_x] = area
        mco[cell_y, cell_x] = (
            u / grid.stride - cell_x,
            v / grid.stride - cell_y,
        )
        mv[cell_y, cell_x] = (
            np.asarray(ann.vertices_image, dtype=float) / grid.stride
        ).reshape(16)
        ms[cell_y, cell_x] = (ann.dim.l, ann.dim.w, ann.dim.h)
    return TargetMaps(mc, mco, mv, ms, stride=grid.stride)


def _local_maxima(heatmap: np.ndarray) -> np.ndarray:
    """Cells that are >= all eight neighbors, per channel (ties kept)."""
    padded = np.pad(heatmap, ((1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    keep = np.ones(heatmap.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[1 + dy : 1 + dy + heatmap.shape[0],
                             1 + dx : 1 + dx + heatmap.shape[1]]
            keep &= heatmap >= shifted
    return keep


def decode(
    maps: TargetMaps, max_objects: int = 100, threshold: float = 0.3
) -> list[Detection]:
    """Extract detections from prediction grids.

    3x3 local maxima of the heatmap above ``threshold`` are kept, sorted by
    score (ties broken by cell index for determinism) and truncated to
    ``max_objects``.  Centroid and corners are scaled back to input-image
    pixels; dimensions are read as-is, floored at 1 cm so that garbage
    cells still yield a well-formed record.
    """
    peaks = _local_maxima(maps.mc) & (maps.mc >= threshold)
    cy, cx, cc = np.nonzero(peaks)
    scores = maps.mc[cy, cx, cc]
    order = np.lexsort((cc, cx, cy, -scores))[:max_objects]

    dets: list[Detection] = []
    for i in order:
        y, x, c = int(cy[i]), int(cx[i]), int(cc[i])
        offset = maps.mco[y, x]
        centroid = (np.array([x, y]) + offset) * maps.stride
        vertices = maps.mv[y, x].reshape(8, 2) * maps.stride
        l, w, h = (max(float(d), 0.01) for d in maps.ms[y, x])
        dets.append(
            Detection(
                class_id=c,
                confidence=float(scores[i]),
                centroid_image=centroid,
                vertices_image=vertices,
                dim=Dimension3D(l, w, h),
            )
        )
    return dets


def localize(
    det: Detection, proj: calib.ProjectionMatrix | np.ndarray
) -> Box3D:
    """Lift a detection to a world box by backprojecting the centroid.

    The centroid of a ground vehicle sits at height h/2, which makes the
    monocular inverse well-posed.
    """
    z = det.dim.h / 2
    world = calib.image_to_world(proj, det.centroid_image, z=z)
    return Box3D((float(world[0]), float(world[1]), z), det.dim, det.class_id)


def weighted_fuse(
    maps: Sequence[np.ndarray], weights: FusionWeights = DEFAULT_FUSION_WEIGHTS
) -> np.ndarray:
    """Elementwise weighted sum of five equal-shape feature maps."""
    if len(maps) != 5:
        raise ShapeMismatch(f"expected five maps, got {len(maps)}")
    shape = maps[0].shape
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise ShapeMismatch(f"map {i} has shape {m.shape}, expected {shape}")
    out = np.zeros(shape)
    for w, m in zip(weights.weights, maps):
        out += w * m
    return out


def save_grid(path: Path | str, array: np.ndarray, stride: int) -> None:
    """Write a grid as flat little-endian float32 plus a JSON sidecar.

    The sidecar (same name, ``.json`` suffix) records height, width,
    channels and stride so grids exported by any external network can be
    ingested back.
    """
    path = Path(path)
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 3:
        raise ShapeMismatch(f"grids are stored as (H, W, C), got shape {arr.shape}")
    path.write_bytes(arr.tobytes())
    sidecar = {
        "version": GRID_SIDECAR_VERSION,
        "height": arr.shape[0],
        "width": arr.shape[1],
        "channels": arr.shape[2],
        "stride": stride,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_grid(path: Path | str) -> tuple[np.ndarray, int]:
    """Read a grid written by :func:`save_grid`; returns (array, stride)."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    shape = (meta["height"], meta["width"], meta["channels"])
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    if data.size != shape[0] * shape[1] * shape[2]:
        raise ShapeMismatch(
            f"{path}: {data.size} values do not fill a {shape} grid"
        )
    return data.reshape(shape).astype(float), int(meta["stride"])


_MAP_NAMES = ("mc", "mco", "mv", "ms")


def save_target_maps(directory: Path | str, stem: str, maps: TargetMaps) -> None:
    """Write all four grids of ``maps`` as ``<stem>.<name>.bin`` files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in _MAP_NAMES:
        save_grid(directory / f"{stem}.{name}.bin", getattr(maps, name), maps.stride)


def load_target_maps(directory: Path | str, stem: str) -> TargetMaps:
    """Read grids written by :func:`save_target_maps`."""
    directory = Path(directory)
    arrays = {}
    stride = None
    for name in _MAP_NAMES:
        arrays[name], stride = load_grid(directory / f"{stem}.{name}.bin")
    return TargetMaps(stride=int(stride), **arrays)
