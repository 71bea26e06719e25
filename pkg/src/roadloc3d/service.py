"""HTTP JSON API for the annotation tool and other clients.

Endpoints (all JSON, coordinates in the same meters/pixels units as the
library; geometry endpoints delegate to the library functions without any
recomputation of their own):

  GET  /scenes                     list configured scenes
  GET  /scenes/{id}                one scene (404 when unknown)
  POST /project                    {scene, points_world} -> {points_image}
  POST /backproject                {scene, points_image, z} -> {points_world}
  POST /box/preview                ground point + dimensions -> corner octet,
                                   projected pixels and bounding rectangle
  GET  /frames/{id}/annotations    stored annotation document
  PUT  /frames/{id}/annotations    optimistic-concurrency write (409 on a
                                   stale revision, 422 on invariant errors)
  GET  /frames/{id}/image          static frame raster, when present
  POST /eval                       run the evaluation pipeline over a manifest

The annotation store is file-backed (one JSON document per frame inside
``data_dir/annotations``) with a revision counter for optimistic
concurrency; writes are atomic and replaying an identical successful PUT
is a no-op rather than a conflict.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    try:
        import tomli as tomllib
    except ModuleNotFoundError:  # JSON configs still work without a TOML parser
        tomllib = None

logger = logging.getLogger(__name__)

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import calib, dataio, metrics
from .box3d import Box3D, Dimension3D, gt_vertices, min_external_rect
from .errors import (
    DegenerateBackprojection,
    DegenerateProjection,
    InvariantViolation,
    RoadLoc3DError,
)

PORT_ENV_VAR = "ROADLOC3D_PORT"


@dataclass
class ServiceConfig:
    scenes_dir: Path
    data_dir: Path
    port: int = 8008


def load_config(path: Path | str) -> ServiceConfig:
    """Read a TOML or JSON server config; the port env var wins when set."""
    path = Path(path)
    if path.suffix == ".toml":
        if tomllib is None:
            raise RuntimeError(
                "TOML configs need Python >= 3.11 or the tomli package; "
                "use a JSON config instead"
            )
        doc = tomllib.loads(path.read_text())
    else:
        doc = json.loads(path.read_text())
    port = int(os.environ.get(PORT_ENV_VAR, doc.get("port", 8008)))
    base = path.parent
    scenes = Path(doc["scenes_dir"])
    data = Path(doc["data_dir"])
    return ServiceConfig(
        scenes_dir=scenes if scenes.is_absolute() else base / scenes,
        data_dir=data if data.is_absolute() else base / data,
        port=port,
    )


class ProjectRequest(BaseModel):
    scene: str
    points_world: list[tuple[float, float, float]]


class BackprojectRequest(BaseModel):
    scene: str
    points_image: list[tuple[float, float]]
    z: float = 0.0


class BoxPreviewRequest(BaseModel):
    scene: str
    dim: tuple[float, float, float]
    class_id: int = 0
    base_image: tuple[float, float] | None = None
    base_world: tuple[float, float] | None = None


class PutAnnotationsRequest(BaseModel):
    revision: int = Field(ge=0)
    scene_id: str
    objects: list[dict]


class EvalRequest(BaseModel):
    manifest: str
    pred_dir: str
    scenes_dir: str | None = None
    thresholds: list[float] = (0.5, 0.7)
    bin_width: float = 10.0
    stream: bool = False


class AnnotationStore:
    """File-backed annotation documents with optimistic concurrency."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, frame_id: str) -> Path:
        if "/" in frame_id or frame_id in ("", ".", ".."):
            raise HTTPException(status_code=404, detail="unknown frame id")
        return self.root / f"{frame_id}.json"

    @staticmethod
    def _digest(doc: dict) -> str:
        payload = {"scene_id": doc["scene_id"], "objects": doc["objects"]}
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()

    def get(self, frame_id: str) -> dict:
        path = self._path(frame_id)
        if not path.exists():
            return {"frame_id": frame_id, "revision": 0, "scene_id": "", "objects": []}
        return json.loads(path.read_text())

    def put(self, frame_id: str, request: PutAnnotationsRequest) -> dict:
        with self._lock:
            current = self.get(frame_id)
            candidate = {
                "frame_id": frame_id,
                "revision": request.revision + 1,
                "scene_id": request.scene_id,
                "objects": request.objects,
            }
            if request.revision != current["revision"]:
                # Replaying the exact write that produced the current state
                # is a no-op, not a conflict.
                if (
                    current["revision"] == request.revision + 1
                    and self._digest(current) == self._digest(candidate)
                ):
                    return current
                raise HTTPException(
                    status_code=409,
                    detail={
                        "stored_revision": current["revision"],
                        "submitted_revision": request.revision,
                    },
                )
            tmp = self._path(frame_id).with_name(f".{frame_id}.tmp")
            tmp.write_text(json.dumps(candidate, indent=2) + "\n")
            os.replace(tmp, self._path(frame_id))
            return candidate


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="roadloc3d annotation service")
    store = AnnotationStore(config.data_dir / "annotations")
    images_dir = config.data_dir / "images"

    def load_scene_file(path: Path) -> dataio.SceneMeta:
        # The filename stem is the canonical API scene id, whatever the
        # document embeds; lookups and listings then always agree.
        return replace(dataio.load_scene(path), scene_id=path.stem)

    def scene_or_404(scene_id: str) -> dataio.SceneMeta:
        path = config.scenes_dir / f"{scene_id}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown scene {scene_id!r}")
        return load_scene_file(path)

    def scene_to_dict(scene: dataio.SceneMeta) -> dict:
        return {
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

    @app.get("/scenes")
    def list_scenes() -> list[dict]:
        out = []
        for path in sorted(config.scenes_dir.glob("*.json")):
            try:
                out.append(scene_to_dict(load_scene_file(path)))
            except RoadLoc3DError as exc:
                logger.warning("skipping %s in the scene listing: %s", path.name, exc)
        return out

    @app.get("/scenes/{scene_id}")
    def get_scene(scene_id: str) -> dict:
        return scene_to_dict(scene_or_404(scene_id))

    @app.post("/project")
    def project(req: ProjectRequest) -> dict:
        scene = scene_or_404(req.scene)
        proj = calib.build_projection(scene.calib)
        try:
            uv = calib.world_to_image(proj, np.asarray(req.points_world, float))
        except DegenerateProjection as exc:
            raise HTTPException(
                status_code=422, detail={"error": str(exc), "index": exc.index}
            )
        return {"points_image": np.atleast_2d(uv).tolist()}

    @app.post("/backproject")
    def backproject(req: BackprojectRequest) -> dict:
        scene = scene_or_404(req.scene)
        proj = calib.build_projection(scene.calib)
        try:
            xyz = calib.image_to_world(proj, np.asarray(req.points_image, float), z=req.z)
        except DegenerateBackprojection as exc:
            raise HTTPException(
                status_code=422, detail={"error": str(exc), "index": exc.index}
            )
        return {"points_world": np.atleast_2d(xyz).tolist()}

    @app.post("/box/preview")
    def box_preview(req: BoxPreviewRequest) -> dict:
        scene = scene_or_404(req.scene)
        proj = calib.build_projection(scene.calib)
        if any(d < 0 for d in req.dim):
            raise HTTPException(
                status_code=422, detail={"error": "dimensions must be nonnegative"}
            )
        if all(d == 0 for d in req.dim):
            dim = None  # zero-size preview degenerates to a single ground point
        else:
            try:
                dim = Dimension3D(*req.dim)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail={"error": str(exc)})
        try:
            if req.base_world is not None:
                x, y = req.base_world
            elif req.base_image is not None:
                world = calib.image_to_world(
                    proj, np.asarray(req.base_image, float), z=0.0
                )
                x, y = float(world[0]), float(world[1])
            else:
                raise HTTPException(
                    status_code=422,
                    detail={"error": "one of base_image or base_world is required"},
                )
            if dim is None:
                corners = np.tile(np.array([x, y, 0.0]), (8, 1))
            else:
                box = Box3D((x, y, dim.h / 2), dim, req.class_id)
                corners = gt_vertices(box).points
            pixels = calib.world_to_image(proj, corners)
        except (DegenerateProjection, DegenerateBackprojection) as exc:
            raise HTTPException(
                status_code=422, detail={"error": str(exc), "index": exc.index}
            )
        rect = min_external_rect(pixels)
        return {
            "vertices_world": corners.tolist(),
            "vertices_image": pixels.tolist(),
            "rect2d": {
                "x_min": rect.x_min,
                "y_min": rect.y_min,
                "x_max": rect.x_max,
                "y_max": rect.y_max,
            },
        }

    @app.get("/frames/{frame_id}/annotations")
    def get_annotations(frame_id: str) -> dict:
        return store.get(frame_id)

    @app.put("/frames/{frame_id}/annotations")
    def put_annotations(frame_id: str, req: PutAnnotationsRequest) -> dict:
        scene = None
        scene_path = config.scenes_dir / f"{req.scene_id}.json"
        if scene_path.exists():
            scene = dataio.load_scene(scene_path)
        for i, obj in enumerate(req.objects):
            try:
                ann = dataio.annotation_from_dict(obj, f"frames/{frame_id}", i)
                dataio.validate_annotation(ann, scene, where=f"objects[{i}]")
            except InvariantViolation as exc:
                raise HTTPException(
                    status_code=422, detail={"field": exc.field, "error": str(exc)}
                )
            except RoadLoc3DError as exc:
                raise HTTPException(
                    status_code=422, detail={"field": f"objects[{i}]", "error": str(exc)}
                )
        return store.put(frame_id, req)

    @app.get("/frames/{frame_id}/image")
    def get_frame_image(frame_id: str):
        for suffix in (".png", ".jpg", ".npy"):
            path = images_dir / f"{frame_id}{suffix}"
            if path.exists():
                return FileResponse(path)
        raise HTTPException(status_code=404, detail=f"no image for frame {frame_id!r}")

    def run_eval(req: EvalRequest) -> tuple[metrics.EvalReport, list]:
        scenes_dir = Path(req.scenes_dir) if req.scenes_dir else config.scenes_dir
        frame_paths = dataio.read_manifest(req.manifest)
        frames = []
        extent = None
        for path in frame_paths:
            frame = dataio.load_annotations(path)
            scene = dataio.load_scene(scenes_dir / f"{frame.scene_id}.json")
            extent = scene.extent
            proj = calib.build_projection(scene.calib)
            gts = [dataio.annotation_to_world_box(a, scene) for a in frame.objects]
            pred_path = Path(req.pred_dir) / path.name
            dets: list[tuple[float, Box3D]] = []
            if pred_path.exists():
                from .targets import localize

                for det in dataio.load_detections(pred_path):
                    dets.append((det.confidence, localize(det, proj)))
            frames.append(metrics.FrameResult(dets, gts, extent=scene.extent))
        if extent is None:
            raise HTTPException(status_code=422, detail={"error": "empty manifest"})
        report = metrics.evaluate_frames(
            frames, extent, thresholds=req.thresholds, bin_width=req.bin_width
        )
        return report, frames

    @app.post("/eval")
    def eval_endpoint(req: EvalRequest):
        if not Path(req.manifest).exists():
            raise HTTPException(status_code=422, detail={"error": "manifest not found"})
        if req.stream:
            def ndjson():
                frame_paths = dataio.read_manifest(req.manifest)
                for i in range(len(frame_paths)):
                    yield json.dumps({"done": i, "total": len(frame_paths)}) + "\n"
                report, _ = run_eval(req)
                yield json.dumps({"report": report.to_dict()}) + "\n"

            return StreamingResponse(ndjson(), media_type="application/x-ndjson")
        report, _ = run_eval(req)
        return report.to_dict()

    return app


def run_service(config: ServiceConfig) -> None:  # pragma: no cover - thin wrapper
    import uvicorn

    uvicorn.run(create_app(config), host="127.0.0.1", port=config.port)
