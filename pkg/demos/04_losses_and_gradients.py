"""The six training loss terms and their verified gradients.

Each term is a plain numerical function: classification focal loss on the
heatmap, L1 on offsets/corners/dimensions, a reprojection consistency term
through the camera, and a complete-IoU term on bounding rectangles.  Every
analytic gradient in the package is checked against central finite
differences; this script shows the comparison live.
"""

import numpy as np

from roadloc3d import box3d, calib, dataio, losses, targets
from roadloc3d.metrics import SceneExtent

rng = np.random.default_rng(3)

params = calib.CalibrationParams(2878.13, 0.17874, 0.26604, 10.11908, 960.0, 540.0)
scene, annotations = dataio.synth_scene(
    params, SceneExtent(120.0, 25.0), n_vehicles=3, rng=21, image_size=(1920, 1080),
)
scaled = dataio.rescale_annotations(annotations, (1920, 1080), (512, 512))
gt = targets.encode(scaled)
mask = gt.peak_mask()

# Anchors: the world minimum corner of each vehicle, indexed by its cell.
proj512 = calib.transform_projection(
    calib.scale_matrix((1920, 1080), (512, 512)), calib.build_projection(params)
)
anchors = np.zeros((*mask.shape, 3))
for ann, s in zip(annotations, scaled):
    cell = (int(s.centroid_image[1]) // 4, int(s.centroid_image[0]) // 4)
    anchors[cell] = box3d.gt_vertices(dataio.annotation_to_world_box(ann, scene)).points[1]

# A noisy "network output".
pred = gt.perfect_prediction()
pred.mc = np.clip(pred.mc + rng.normal(scale=0.05, size=pred.mc.shape), 0.01, 0.99)
pred.mco = pred.mco + rng.normal(scale=0.02, size=pred.mco.shape)
pred.mv = pred.mv + rng.normal(scale=0.5, size=pred.mv.shape)
pred.ms = pred.ms + rng.normal(scale=0.1, size=pred.ms.shape)

components = [
    losses.focal_loss(pred.mc, gt.mc),
    losses.offset_loss(pred.mco, gt.mco, mask),
    losses.vertex_loss(pred.mv, gt.mv, mask),
    losses.dim_loss(pred.ms, gt.ms, mask),
    losses.reprojection_loss(proj512, pred.ms, pred.mv * 4, anchors, mask),
    losses.iou_constraint_loss(pred.mv * 4, gt.mv * 4, mask),
]
names = ["classification", "offset", "corner", "dimension", "reprojection", "iou"]
print("loss terms on a noisy prediction:")
for name, value in zip(names, components):
    print(f"  {name:14s} {value:10.5f}")
weights = losses.LossWeights()  # (1, 1, 0.1, 0.1, 0.1, 1)
print(f"  {'weighted total':14s} {losses.total_loss(components, weights):10.5f}")

# Gradient of the reprojection term w.r.t. the predicted dimensions,
# against the finite-difference harness.
analytic = losses.reprojection_loss_grad_dims(proj512, pred.ms, pred.mv * 4, anchors, mask)
numeric = losses.finite_difference_gradient(
    lambda x: losses.reprojection_loss(proj512, x, pred.mv * 4, anchors, mask),
    pred.ms, eps=1e-6,
)
gap = np.abs(analytic - numeric).max()
print(f"\nreprojection gradient vs finite differences: max gap {gap:.2e}")

# Same check for the complete-IoU rectangle gradient.
rect_gt = box3d.Rect2D(100.0, 200.0, 300.0, 380.0)
rect_pred = box3d.Rect2D(120.0, 190.0, 330.0, 360.0)
analytic = losses.ciou_loss_grad(rect_pred, rect_gt)
numeric = losses.finite_difference_gradient(
    lambda x: box3d.ciou_loss(box3d.Rect2D(*x), rect_gt), rect_pred.as_array(), eps=1e-6
)
print(f"complete-IoU gradient vs finite differences: "
      f"max gap {np.abs(analytic - numeric).max():.2e}")
