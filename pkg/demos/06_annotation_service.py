"""The annotation HTTP service: scenes, live box previews, stored labels.

This walkthrough drives the JSON API in-process (no socket); `roadloc3d
serve --config server.toml` runs the same app under uvicorn for the
browser annotation tool.
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from roadloc3d import calib, dataio
from roadloc3d.metrics import SceneExtent
from roadloc3d.service import ServiceConfig, create_app

root = Path(tempfile.mkdtemp(prefix="roadloc3d-demo-"))
(root / "scenes").mkdir()
dataio.save_scene(
    root / "scenes" / "A.json",
    dataio.SceneMeta(
        scene_id="A",
        calib=calib.CalibrationParams(2878.13, 0.17874, 0.26604, 10.11908, 960.0, 540.0),
        extent=SceneExtent(120.0, 25.0),
        image_size=(1920, 1080),
    ),
)

app = create_app(ServiceConfig(scenes_dir=root / "scenes", data_dir=root / "data"))
client = TestClient(app)

print("GET /scenes ->", [s["scene"] for s in client.get("/scenes").json()])

preview = client.post(
    "/box/preview",
    json={"scene": "A", "base_world": [0.0, 50.0], "dim": [4.5, 1.8, 1.4]},
).json()
print("\nPOST /box/preview for a car 50 m out:")
print("  first image corner:", [round(v, 1) for v in preview["vertices_image"][0]])
print("  rectangle:", {k: round(v, 1) for k, v in preview["rect2d"].items()})

# Store an annotation with optimistic concurrency.
objects = [
    {
        "class": "car",
        "centroid_uv": client.post(
            "/project", json={"scene": "A", "points_world": [[0.0, 50.0, 0.7]]}
        ).json()["points_image"][0],
        "vertices_uv": preview["vertices_image"],
        "dim_lwh": [4.5, 1.8, 1.4],
        "centroid_xyz": [0.0, 50.0, 0.7],
    }
]
put = client.put(
    "/frames/000042/annotations",
    json={"revision": 0, "scene_id": "A", "objects": objects},
)
print(f"\nPUT annotations -> revision {put.json()['revision']}")

stale = client.put(
    "/frames/000042/annotations",
    json={"revision": 0, "scene_id": "A", "objects": []},
)
print(f"stale second writer -> HTTP {stale.status_code} (optimistic concurrency)")

bad = dict(objects[0])
bad["vertices_uv"] = bad["vertices_uv"][4:] + bad["vertices_uv"][:4]  # rings swapped
resp = client.put(
    "/frames/000043/annotations",
    json={"revision": 0, "scene_id": "A", "objects": [bad]},
)
print(f"swapped corner rings -> HTTP {resp.status_code}, "
      f"field {resp.json()['detail']['field']!r}")

print("\nstored document:")
print(json.dumps(client.get("/frames/000042/annotations").json(), indent=2)[:400], "...")
