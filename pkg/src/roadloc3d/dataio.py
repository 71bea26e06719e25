"""Scene/annotation file formats, augmentation, and synthetic scenes.

File formats (all JSON, UTF-8, schema version 1):

  Scene calibration file::

      {"version": 1, "scene": "A", "f": 2878.13, "phi": 0.17874,
       "theta": 0.26604, "h": 10119.08, "h_unit": "mm",
       "cx": 960.0, "cy": 540.0, "image_width": 1920, "image_height": 1080,
       "D_ry": 120.0, "D_rx": 25.0}

    ``h_unit`` is "mm" or "m"; heights are converted to meters on load
    (meters are canonical everywhere in the toolkit).  ``cx``/``cy``
    default to the image center when omitted.

  Frame annotation file::

      {"version": 1, "scene_id": "A", "frame_id": "000042", "objects": [
          {"class": "car", "centroid_uv": [u, v],
           "vertices_uv": [[u, v] x 8], "dim_lwh": [l, w, h],
           "centroid_xyz": [x, y, z]}]}

    ``centroid_xyz`` is optional (present when world truth exists);
    prediction files reuse the same schema with an extra per-object
    ``confidence``.

  Dataset manifest: newline-delimited frame annotation paths.

Writes are atomic (temp file + rename) and loads of saved files reproduce
the values exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import calib
from .box3d import Box3D, Dimension3D, gt_vertices, project_box
from .errors import (
    InvariantViolation,
    ParseError,
    SchemaVersionError,
    SingularHomography,
)
from .metrics import SceneExtent
from .targets import Detection

SCHEMA_VERSION = 1

CLASS_NAMES = ("car", "truck", "bus")

# Dimension priors (mean (l, w, h) in meters, relative spread) used by the
# synthetic generator, per class.
DIMENSION_PRIORS = {
    0: ((4.5, 1.8, 1.45), 0.10),   # car
    1: ((8.5, 2.5, 2.8), 0.10),    # truck
    2: ((12.0, 2.76, 2.82), 0.05), # bus
}


@dataclass(frozen=True)
class Annotation:
    """A labeled vehicle: image-space geometry plus metric dimensions."""

    class_id: int
    centroid_image: tuple[float, float]
    vertices_image: tuple[tuple[float, float], ...]
    dim: Dimension3D
    centroid_world: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class SceneMeta:
    """A configured camera scene: calibration, extent and image size."""

    scene_id: str
    calib: calib.CalibrationParams
    extent: SceneExtent
    image_size: tuple[int, int]


@dataclass(frozen=True)
class FrameAnnotations:
    """All labeled vehicles of one frame."""

    scene_id: str
    frame_id: str
    objects: tuple[Annotation, ...]


@dataclass(frozen=True)
class AugmentSpec:
    """Augmentation magnitudes: color jitter deltas, flip, corner warp."""

    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hflip: bool = True
    perspective_px: float = 40.0

    def __post_init__(self) -> None:
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} delta must be nonnegative")
        if self.perspective_px < 0:
            raise ValueError("perspective displacement must be nonnegative")


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_version(doc: dict, path: Path) -> None:
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"unsupported schema version {version!r} (supported: {SCHEMA_VERSION})",
            path=str(path),
            version=version,
        )


def _load_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}: {exc.msg}", path=str(path))
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object", path=str(path))
    return doc


def load_scene(path: Path | str) -> SceneMeta:
    """Read a scene calibration file; camera height is converted to meters."""
    path = Path(path)
    doc = _load_json(path)
    _check_version(doc, path)
    try:
        width = int(doc["image_width"])
        height = int(doc["image_height"])
        h_unit = doc.get("h_unit", "m")
        if h_unit not in ("mm", "m"):
            raise ParseError(f"h_unit must be 'mm' or 'm', got {h_unit!r}", path=str(path))
        h = float(doc["h"]) / (1000.0 if h_unit == "mm" else 1.0)
        params = calib.CalibrationParams(
            f=float(doc["f"]),
            phi=float(doc["phi"]),
            theta=float(doc["theta"]),
            h=h,
            cx=float(doc.get("cx", width / 2)),
            cy=float(doc.get("cy", height / 2)),
        )
        extent = SceneExtent(d_ry=float(doc["D_ry"]), d_rx=float(doc["D_rx"]))
    except KeyError as exc:
        raise ParseError("missing required field", path=str(path), field=str(exc))
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), path=str(path))
    return SceneMeta(
        scene_id=str(doc.get("scene", path.stem)),
        calib=params,
        extent=extent,
        image_size=(width, height),
    )


def save_scene(path: Path | str, scene: SceneMeta) -> None:
    """Write a scene calibration file (camera height stored in meters)."""
    doc = {
        "version": SCHEMA_VERSION,
        "scene": scene.scene_id,
        "f": scene.calib.f,
        "phi": scene.calib.phi,
        "theta": scene.calib.theta,
        "h": scene.calib.h,
        "h_unit": "m",
        "cx": scene.calib.cx,
        "cy": scene.calib.cy,
        "image_width": scene.image_size[0],
        "image_height": scene.image_size[1],
        "D_ry": scene.extent.d_ry,
        "D_rx": scene.extent.d_rx,
    }
    _atomic_write_text(Path(path), json.dumps(doc, indent=2) + "\n")


def class_id_of(value) -> int:
    if isinstance(value, str):
        try:
            return CLASS_NAMES.index(value)
        except ValueError:
            raise ParseError(f"unknown vehicle class {value!r}")
    return int(value)


def _object_to_dict(ann: Annotation, confidence: float | None = None) -> dict:
    doc: dict = {
        "class": CLASS_NAMES[ann.class_id] if ann.class_id < len(CLASS_NAMES) else ann.class_id,
        "centroid_uv": list(ann.centroid_image),
        "vertices_uv": [list(p) for p in ann.vertices_image],
        "dim_lwh": [ann.dim.l, ann.dim.w, ann.dim.h],
    }
    if ann.centroid_world is not None:
        doc["centroid_xyz"] = list(ann.centroid_world)
    if confidence is not None:
        doc["confidence"] = confidence
    return doc


def annotation_from_dict(doc: dict, path: Path | str = "<memory>", index: int = 0) -> Annotation:
    where = f"objects[{index}]"
    try:
        vertices = tuple(
            (float(p[0]), float(p[1])) for p in doc["vertices_uv"]
        )
        if len(vertices) != 8:
            raise ParseError(
                f"expected 8 vertices, got {len(vertices)}", path=str(path), field=where
            )
        l, w, h = (float(v) for v in doc["dim_lwh"])
        world = doc.get("centroid_xyz")
        return Annotation(
            class_id=class_id_of(doc["class"]),
            centroid_image=(float(doc["centroid_uv"][0]), float(doc["centroid_uv"][1])),
            vertices_image=vertices,
            dim=Dimension3D(l, w, h),
            centroid_world=tuple(float(v) for v in world) if world is not None else None,
        )
    except KeyError as exc:
        raise ParseError("missing required field", path=str(path), field=f"{where}.{exc}")
    except (TypeError, ValueError, IndexError) as exc:
        raise ParseError(str(exc), path=str(path), field=where)


def load_annotations(path: Path | str) -> FrameAnnotations:
    """Read a frame annotation file."""
    path = Path(path)
    doc = _load_json(path)
    _check_version(doc, path)
    objects = doc.get("objects", [])
    if not isinstance(objects, list):
        raise ParseError("objects must be a list", path=str(path), field="objects")
    return FrameAnnotations(
        scene_id=str(doc.get("scene_id", "")),
        frame_id=str(doc.get("frame_id", path.stem)),
        objects=tuple(annotation_from_dict(o, path, i) for i, o in enumerate(objects)),
    )


def save_annotations(path: Path | str, frame: FrameAnnotations) -> None:
    """Write a frame annotation file atomically."""
    doc = {
        "version": SCHEMA_VERSION,
        "scene_id": frame.scene_id,
        "frame_id": frame.frame_id,
        "objects": [_object_to_dict(a) for a in frame.objects],
    }
    _atomic_write_text(Path(path), json.dumps(doc, indent=2) + "\n")


def load_detections(path: Path | str) -> list[Detection]:
    """Read a prediction file (frame schema plus per-object confidence)."""
    path = Path(path)
    doc = _load_json(path)
    _check_version(doc, path)
    dets = []
    for i, obj in enumerate(doc.get("objects", [])):
        ann = annotation_from_dict(obj, path, i)
        dets.append(
            Detection(
                class_id=ann.class_id,
                confidence=float(obj.get("confidence", 1.0)),
                centroid_image=np.asarray(ann.centroid_image),
                vertices_image=np.asarray(ann.vertices_image),
                dim=ann.dim,
            )
        )
    return dets


def save_detections(
    path: Path | str, scene_id: str, frame_id: str, detections: Sequence[Detection]
) -> None:
    """Write decoded detections using the frame schema plus confidence."""
    objects = []
    for det in detections:
        ann = Annotation(
            class_id=det.class_id,
            centroid_image=tuple(det.centroid_image),
            vertices_image=tuple(tuple(p) for p in det.vertices_image),
            dim=det.dim,
        )
        objects.append(_object_to_dict(ann, confidence=det.confidence))
    doc = {
        "version": SCHEMA_VERSION,
        "scene_id": scene_id,
        "frame_id": frame_id,
        "objects": objects,
    }
    _atomic_write_text(Path(path), json.dumps(doc, indent=2) + "\n")


def read_manifest(path: Path | str) -> list[Path]:
    """Read a newline-delimited list of frame paths (relative to the manifest)."""
    path = Path(path)
    out = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            p = Path(line)
            out.append(p if p.is_absolute() else path.parent / p)
    return out


def write_manifest(path: Path | str, frames: Sequence[Path | str]) -> None:
    path = Path(path)
    lines = []
    for frame in frames:
        p = Path(frame)
        try:
            lines.append(str(p.relative_to(path.parent)))
        except ValueError:
            lines.append(str(p))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def validate_annotation(
    ann: Annotation,
    scene: SceneMeta | None = None,
    *,
    where: str = "annotation",
) -> None:
    """Check the structural invariants of one annotation.

    Raises :class:`InvariantViolation` with the offending field path.  The
    corner ordering is checked through the vertical pairs (each roof corner
    must sit above its floor corner in the image); world/image consistency
    is checked when both a world centroid and a scene are available.
    """
    pts = np.asarray(ann.vertices_image, dtype=float)
    if pts.shape != (8, 2) or not np.all(np.isfinite(pts)):
        raise InvariantViolation("vertices must be 8 finite image points", f"{where}.vertices_uv")
    if not np.all(np.isfinite(np.asarray(ann.centroid_image, dtype=float))):
        raise InvariantViolation("centroid must be finite", f"{where}.centroid_uv")
    for i in range(4):
        if not pts[i + 4, 1] < pts[i, 1]:
            raise InvariantViolation(
                f"roof corner {i + 5} must lie above floor corner {i + 1}",
                f"{where}.vertices_uv",
            )
    if ann.centroid_world is not None and scene is not None:
        proj = calib.build_projection(scene.calib)
        uv = calib.world_to_image(proj, np.asarray(ann.centroid_world, dtype=float))
        err = float(np.hypot(uv[0] - ann.centroid_image[0], uv[1] - ann.centroid_image[1]))
        if err > 1.0:
            raise InvariantViolation(
                f"world centroid reprojects {err:.2f}px away from the image centroid",
                f"{where}.centroid_xyz",
            )


# ---------------------------------------------------------------------------
# Augmentation

# Mirroring x swaps the left/right corner roles pairwise: 1<->2, 4<->3,
# 5<->6, 8<->7 in the canonical ordering.
_HFLIP_ORDER = (1, 0, 3, 2, 5, 4, 7, 6)


def hflip(image_width: int, annotations: Sequence[Annotation]) -> list[Annotation]:
    """Mirror annotations horizontally: u -> width-1-u.

    The corner octet is reordered so the canonical ordering still holds for
    the mirrored vehicle; the world centroid no longer matches the scene
    calibration and is dropped (use the mirrored calibration from
    :func:`roadloc3d.calib.mirror_matrix` for any reprojection work).
    """
    out = []
    for ann in annotations:
        u, v = ann.centroid_image
        pts = [ann.vertices_image[j] for j in _HFLIP_ORDER]
        flipped = tuple((image_width - 1 - p[0], p[1]) for p in pts)
        out.append(
            replace(
                ann,
                centroid_image=(image_width - 1 - u, v),
                vertices_image=flipped,
                centroid_world=None,
            )
        )
    return out


def perspective_warp(
    annotations: Sequence[Annotation], homography: np.ndarray
) -> list[Annotation]:
    """Map all image coordinates through a 3x3 homography; dimensions unchanged.

    An exact identity matrix returns the annotations untouched; any other
    warp drops the world centroid (the scene calibration no longer applies).
    """
    m = np.asarray(homography, dtype=float)
    if m.shape != (3, 3):
        raise SingularHomography(f"homography must be 3x3, got {m.shape}")
    if abs(np.linalg.det(m)) < 1e-12:
        raise SingularHomography("homography is not invertible")
    if np.array_equal(m, np.eye(3)):
        return list(annotations)

    def apply(p: tuple[float, float]) -> tuple[float, float]:
        q = m @ np.array([p[0], p[1], 1.0])
        return (q[0] / q[2], q[1] / q[2])

    out = []
    for ann in annotations:
        out.append(
            replace(
                ann,
                centroid_image=apply(ann.centroid_image),
                vertices_image=tuple(apply(p) for p in ann.vertices_image),
                centroid_world=None,
            )
        )
    return out


def homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform from four point correspondences."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
    a = np.asarray(rows)
    b = dst.reshape(-1)
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise SingularHomography("corner correspondences are degenerate")
    return np.append(sol, 1.0).reshape(3, 3)


def random_perspective(
    image_size: tuple[int, int], max_displacement: float, rng: np.random.Generator
) -> np.ndarray:
    """Random view-change homography displacing the image corners.

    Displacements are capped at 10% of the image width; beyond that the
    flat-ground approximation visibly breaks.
    """
    width, height = image_size
    if max_displacement >= 0.1 * width:
        raise ValueError("corner displacement must stay below 10% of the image width")
    src = np.array([[0, 0], [width - 1, 0], [width - 1, height - 1], [0, height - 1]], float)
    dst = src + rng.uniform(-max_displacement, max_displacement, size=(4, 2))
    return homography_from_corners(src, dst)


def apply_color_jitter(
    image: np.ndarray, brightness: float, contrast: float, saturation: float
) -> np.ndarray:
    """Deterministic channelwise color transform on an (H, W, 3) raster.

    Works in the [0, 1] range (uint8 input is converted and restored);
    brightness adds, contrast scales around the mean, saturation scales
    around the per-pixel gray value.  The result is clamped to the valid
    range.  Annotations are never touched by color changes.
    """
    arr = np.asarray(image)
    was_uint8 = arr.dtype == np.uint8
    x = arr.astype(float) / (255.0 if was_uint8 else 1.0)
    x = x + brightness
    x = (x - x.mean()) * (1.0 + contrast) + x.mean()
    gray = x.mean(axis=2, keepdims=True)
    x = gray + (x - gray) * (1.0 + saturation)
    x = np.clip(x, 0.0, 1.0)
    return (x * 255.0).round().astype(np.uint8) if was_uint8 else x


def color_jitter(
    image: np.ndarray, spec: AugmentSpec, rng: np.random.Generator
) -> np.ndarray:
    """Apply random color jitter with deltas drawn inside the configured ranges."""
    b = rng.uniform(-spec.brightness, spec.brightness)
    c = rng.uniform(-spec.contrast, spec.contrast)
    s = rng.uniform(-spec.saturation, spec.saturation)
    return apply_color_jitter(image, b, c, s)


# ---------------------------------------------------------------------------
# Synthetic scenes

def synth_scene(
    params: calib.CalibrationParams,
    extent: SceneExtent,
    n_vehicles: int,
    rng: np.random.Generator | int,
    *,
    image_size: tuple[int, int] = (1920, 1080),
    scene_id: str = "synthetic",
    min_separation_px: float = 48.0,
    margin_px: float = 8.0,
    max_tries: int = 2000,
) -> tuple[SceneMeta, list[Annotation]]:
    """Generate a fully consistent synthetic scene for oracle testing.

    Vehicles rest on the ground (centroid z = h/2) inside the scene extent,
    with class-conditioned dimensions drawn from the priors.  All image
    coordinates are derived by exact projection, so every annotation
    satisfies the world/image consistency invariant by construction.
    Candidates whose corners leave the image or whose centroid lands within
    ``min_separation_px`` of an accepted one are rejected and resampled;
    output is deterministic per seed.
    """
    if n_vehicles < 0:
        raise ValueError("vehicle count must be nonnegative")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    scene = SceneMeta(scene_id, params, extent, image_size)
    proj = calib.build_projection(params)
    width, height = image_size

    annotations: list[Annotation] = []
    centroids_px: list[np.ndarray] = []
    tries = 0
    while len(annotations) < n_vehicles:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(
                f"placed only {len(annotations)}/{n_vehicles} vehicles after "
                f"{max_tries} tries; relax the separation or extent"
            )
        class_id = int(rng.choice(len(CLASS_NAMES), p=(0.7, 0.15, 0.15)))
        (ml, mw, mh), spread = DIMENSION_PRIORS[class_id]
        l, w, h = (
            m * (1.0 + rng.uniform(-spread, spread)) for m in (ml, mw, mh)
        )
        dim = Dimension3D(l, w, h)
        x = rng.uniform(-extent.d_rx / 2, extent.d_rx / 2)
        y = rng.uniform(max(5.0, 0.15 * extent.d_ry), extent.d_ry)
        box = Box3D((x, y, dim.h / 2), dim, class_id)
        vs = gt_vertices(box)
        try:
            corners = project_box(proj, vs)
            centroid_px = calib.world_to_image(proj, np.asarray(box.centroid))
        except Exception:
            continue
        pts = np.vstack([corners, centroid_px])
        if not (
            np.all(pts[:, 0] >= margin_px)
            and np.all(pts[:, 0] <= width - 1 - margin_px)
            and np.all(pts[:, 1] >= margin_px)
            and np.all(pts[:, 1] <= height - 1 - margin_px)
        ):
            continue
        if any(
            float(np.hypot(*(centroid_px - prev))) < min_separation_px
            for prev in centroids_px
        ):
            continue
        centroids_px.append(centroid_px)
        annotations.append(
            Annotation(
                class_id=class_id,
                centroid_image=(float(centroid_px[0]), float(centroid_px[1])),
                vertices_image=tuple((float(u), float(v)) for u, v in corners),
                dim=dim,
                centroid_world=(x, y, dim.h / 2),
            )
        )
    return scene, annotations


def rescale_annotations(
    annotations: Sequence[Annotation],
    from_size: tuple[float, float],
    to_size: tuple[float, float],
) -> list[Annotation]:
    """Rescale image coordinates between resolutions (e.g. native -> 512x512).

    Dimensions and world centroids are resolution-independent and pass
    through unchanged; the world/image consistency invariant then holds
    with the equally rescaled projection (:func:`roadloc3d.calib.scale_matrix`).
    """
    sx = to_size[0] / from_size[0]
    sy = to_size[1] / from_size[1]
    out = []
    for ann in annotations:
        out.append(
            replace(
                ann,
                centroid_image=(ann.centroid_image[0] * sx, ann.centroid_image[1] * sy),
                vertices_image=tuple((u * sx, v * sy) for u, v in ann.vertices_image),
            )
        )
    return out


def rescale_detections(
    detections: Sequence[Detection],
    from_size: tuple[float, float],
    to_size: tuple[float, float],
) -> list[Detection]:
    """Rescale decoded detections between resolutions (counterpart of above)."""
    scale = np.array([to_size[0] / from_size[0], to_size[1] / from_size[1]])
    out = []
    for det in detections:
        out.append(
            Detection(
                class_id=det.class_id,
                confidence=det.confidence,
                centroid_image=det.centroid_image * scale,
                vertices_image=det.vertices_image * scale,
                dim=det.dim,
            )
        )
    return out


def annotation_to_world_box(ann: Annotation, scene: SceneMeta) -> Box3D:
    """World box of an annotation, backprojecting when world truth is absent."""
    if ann.centroid_world is not None:
        return Box3D(ann.centroid_world, ann.dim, ann.class_id)
    proj = calib.build_projection(scene.calib)
    z = ann.dim.h / 2
    world = calib.image_to_world(proj, np.asarray(ann.centroid_image, float), z=z)
    return Box3D((float(world[0]), float(world[1]), z), ann.dim, ann.class_id)
