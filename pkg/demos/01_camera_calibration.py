"""Roadside camera model: projection, backprojection, and calibration.

A roadside camera is described by five numbers: focal length, tilt, pan,
height, and the principal point.  This walkthrough builds the camera of a
real highway scene, maps points between the road plane and the image, and
then recovers the parameters from nothing but the vanishing point and a
few road marks of known length.
"""

import math

import numpy as np

from roadloc3d import calib

# A published highway scene: ~2878 px focal, 10.2 deg tilt, 15.2 deg pan,
# camera 10.12 m above the road, full-HD sensor.
params = calib.CalibrationParams(
    f=2878.13, phi=0.17874, theta=0.26604, h=10.11908, cx=960.0, cy=540.0
)
proj = calib.build_projection(params)

print("projection matrix H = K R T:")
print(np.array_str(proj.matrix, precision=3))

# Where does a point 50 m down the road appear in the image?
ground = np.array([0.0, 50.0, 0.0])
uv = calib.world_to_image(proj, ground)
print(f"\nworld {ground} m -> pixel ({uv[0]:.1f}, {uv[1]:.1f})")

# And back: a pixel plus a known height gives the world point.
back = calib.image_to_world(proj, uv, z=0.0)
print(f"pixel back to world: {np.round(back, 9)} (round trip is exact)")

# The vanishing point of the traffic direction is where the lane lines
# meet; it pins the camera's tilt and pan.
vp = calib.vp_from_params(params)
print(f"\nvanishing point: ({vp.u0:.1f}, {vp.v0:.1f})")

# Calibration from scratch: take the vanishing point plus marks of known
# length (lane dashes along the road, lane width across it), as measured
# in the image, and search for the camera that explains them.
marks = []
for (x1, y1), (x2, y2), kind in [
    ((-5.0, 20.0), (-5.0, 26.0), calib.ALONG_ROAD),
    ((2.0, 35.0), (2.0, 41.0), calib.ALONG_ROAD),
    ((6.0, 55.0), (6.0, 61.0), calib.ALONG_ROAD),
    ((-4.0, 25.0), (-0.5, 25.0), calib.ACROSS_ROAD),
    ((1.0, 50.0), (4.5, 50.0), calib.ACROSS_ROAD),
]:
    ends = calib.world_to_image(proj, np.array([[x1, y1, 0.0], [x2, y2, 0.0]]))
    marks.append(
        calib.GroundMark(
            endpoints=((ends[0, 0], ends[0, 1]), (ends[1, 0], ends[1, 1])),
            world_length=math.hypot(x2 - x1, y2 - y1),
            kind=kind,
        )
    )

solution = calib.solve_vwl(vp, marks, image_size=(1920, 1080))
print("\nrecovered parameters (truth in parentheses):")
print(f"  f     {solution.params.f:9.2f} px  ({params.f})")
print(f"  tilt  {solution.params.phi:9.5f} rad ({params.phi})")
print(f"  pan   {solution.params.theta:9.5f} rad ({params.theta})")
print(f"  h     {solution.params.h:9.5f} m   ({params.h})")
print(f"  residual {solution.residual:.2e}")
