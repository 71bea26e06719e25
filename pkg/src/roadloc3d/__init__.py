"""roadloc3d: roadside monocular 3D vehicle localization toolkit.

Submodules:

  calib    single-vanishing-point camera model, world/image transforms,
           calibration from a vanishing point plus known road marks
  box3d    3D box construction/projection, rectangles, IoU, complete-IoU
  targets  target-grid encoding/decoding and multi-scale weighted fusion
  losses   the six training loss terms with analytic gradients
  metrics  matching, average precision, localization/dimension metrics
  dataio   file formats, augmentation, synthetic scene generation
  service  annotation/evaluation HTTP API
  cli      command-line frontend
"""

from . import box3d, calib, dataio, errors, losses, metrics, targets
from .box3d import Box3D, Dimension3D, Rect2D, VertexSet
from .calib import CalibrationParams, ProjectionMatrix, VanishingPoint
from .dataio import Annotation, FrameAnnotations, SceneMeta
from .metrics import EvalReport, SceneExtent
from .targets import Detection, FusionWeights, GridConfig, TargetMaps

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "Box3D",
    "CalibrationParams",
    "Detection",
    "Dimension3D",
    "EvalReport",
    "FrameAnnotations",
    "FusionWeights",
    "GridConfig",
    "ProjectionMatrix",
    "Rect2D",
    "SceneExtent",
    "SceneMeta",
    "TargetMaps",
    "VanishingPoint",
    "VertexSet",
    "box3d",
    "calib",
    "dataio",
    "errors",
    "losses",
    "metrics",
    "targets",
]
