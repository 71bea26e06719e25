"""Target grids: encoding vehicles into heatmaps and decoding them back.

Detector outputs are modeled as four grids at a quarter of the input
resolution: a per-class Gaussian-peak heatmap, a sub-cell centroid offset,
the eight corner coordinates, and the metric dimensions.  Encoding and
decoding are exact inverses away from cell collisions.
"""

import numpy as np

from roadloc3d import dataio, targets
from roadloc3d.metrics import SceneExtent
from roadloc3d import calib

params = calib.CalibrationParams(2878.13, 0.17874, 0.26604, 10.11908, 960.0, 540.0)
scene, annotations = dataio.synth_scene(
    params, SceneExtent(d_ry=120.0, d_rx=25.0), n_vehicles=4, rng=11,
    image_size=(1920, 1080),
)
print(f"synthesized {len(annotations)} vehicles:")
for a in annotations:
    print(f"  class {a.class_id} at pixel "
          f"({a.centroid_image[0]:7.1f}, {a.centroid_image[1]:7.1f}), "
          f"dims ({a.dim.l:.2f}, {a.dim.w:.2f}, {a.dim.h:.2f}) m")

# The network frame is 512x512; image coordinates are rescaled into it.
scaled = dataio.rescale_annotations(annotations, scene.image_size, (512, 512))
maps = targets.encode(scaled)
print(f"\ngrids: heatmap {maps.mc.shape}, offsets {maps.mco.shape}, "
      f"corners {maps.mv.shape}, dimensions {maps.ms.shape}")
print(f"heatmap peaks: {int(maps.peak_mask().sum())} "
      f"(max value {maps.mc.max():.1f})")

# Kernel spread follows the projected object size.
rect_sizes = [
    (np.ptp(np.asarray(a.vertices_image)[:, 0]), np.ptp(np.asarray(a.vertices_image)[:, 1]))
    for a in scaled
]
sigmas = [targets.gaussian_sigma(w, h, stride=4) for w, h in rect_sizes]
print(f"kernel sigmas (cells): {np.round(sigmas, 2)}")

# Decoding inverts the encoding.
dets = targets.decode(maps, threshold=0.5)
print(f"\ndecoded {len(dets)} detections; centroid errors vs truth (px):")
for det in sorted(dets, key=lambda d: d.centroid_image[0]):
    truth = min(
        scaled, key=lambda a: np.hypot(*(np.asarray(a.centroid_image) - det.centroid_image))
    )
    err = np.hypot(*(np.asarray(truth.centroid_image) - det.centroid_image))
    print(f"  class {det.class_id}  score {det.confidence:.2f}  error {err:.2e}")

# Multi-scale fusion: five maps, one weighted sum.
rng = np.random.default_rng(0)
levels = [rng.normal(size=(128, 128, 8)) for _ in range(5)]
fused = targets.weighted_fuse(levels)  # default weights (0.5, 0.2, 0.1, 0.1, 0.1)
print(f"\nfused five pyramid levels -> {fused.shape}")
