"""3D vehicle boxes: corners, image projection, rectangles, and IoU.

Vehicles are axis-aligned boxes in the road frame: width across the road,
length along it, height up.  Eight ordered corners (floor ring then roof
ring) represent each box everywhere in the toolkit.
"""

import numpy as np

from roadloc3d import box3d, calib
from roadloc3d.box3d import Box3D, Dimension3D, Rect2D

car = Box3D(centroid=(0.0, 50.0, 0.7), dim=Dimension3D(l=4.5, w=1.8, h=1.4))
corners = box3d.gt_vertices(car)
print("corner octet of a car 50 m down the road (floor ring, then roof):")
print(np.round(corners.points, 3))
print("recovered (w, l, h) from the edges:", np.round(corners.edge_lengths(), 3))

# Project through a roadside camera.
params = calib.CalibrationParams(2878.13, 0.17874, 0.26604, 10.11908, 960.0, 540.0)
proj = calib.build_projection(params)
pixels = box3d.project_box(proj, corners)
print("\nprojected pixels:")
print(np.round(pixels, 1))

rect = box3d.min_external_rect(pixels)
print(f"\nbounding rectangle: ({rect.x_min:.1f}, {rect.y_min:.1f}) .. "
      f"({rect.x_max:.1f}, {rect.y_max:.1f}), area {rect.area:.0f} px^2")

# A box rebuilt from (possibly wrong) dimensions at the true minimum
# corner; this is the geometry behind the reprojection training constraint.
rebuilt = box3d.proj_vertices(corners.points[1], Dimension3D(4.7, 1.8, 1.4))
moved = ~np.isclose(rebuilt.points, corners.points).all(axis=1)
print(f"\nrebuilding with +0.2 m length moves corners {np.nonzero(moved)[0] + 1}")

# Volume IoU drives detection matching.
shifted = Box3D((0.5, 50.3, 0.7), car.dim)
print(f"\nIoU with a half-meter-shifted copy: {box3d.iou3d(car, shifted):.3f}")

# Complete-IoU loss between rectangles: zero only for a perfect match,
# otherwise penalizes overlap, center distance, and aspect mismatch.
a = Rect2D(0.0, 0.0, 1.0, 1.0)
print(f"complete-IoU loss, identical rects: {box3d.ciou_loss(a, a)}")
print(f"complete-IoU loss, touching unit squares: "
      f"{box3d.ciou_loss(a, Rect2D(1.0, 0.0, 2.0, 1.0)):.3f}")
