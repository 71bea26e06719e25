"""Evaluation: detection matching, AP, throughput, precision/error metrics.

Matching follows the classic detection-benchmark protocol: detections are
ranked by confidence and greedily claim the unmatched ground-truth box of
highest volume IoU; duplicates on an already-claimed box count as false
positives.  Average precision is the 11-point interpolated form, with the
interpolated precision at recall r being the maximum measured precision at
any recall >= r.

Localization and dimension quality are reported per vehicle:

  localization precision: 1 - sum over x, y of |error| / (extent/2),
  localization error:     |dx| + |dy| in meters,
  dimension precision:    1 - sum over l, w, h of |error| / truth,
  dimension error:        |dl| + |dw| + |dh| in meters.

Precisions are reported unclamped and may go negative for gross errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .box3d import Box3D, Dimension3D, iou3d
from .errors import NoGroundTruth, NonpositiveGt, NonpositiveTime


@dataclass(frozen=True)
class MatchConfig:
    """IoU threshold for counting a detection as a true positive."""

    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not (0 < self.iou_threshold <= 1):
            raise ValueError(f"IoU threshold must be in (0, 1], got {self.iou_threshold}")


@dataclass(frozen=True)
class SceneExtent:
    """Effective field of view in meters along (d_ry) and across (d_rx) the road."""

    d_ry: float
    d_rx: float

    def __post_init__(self) -> None:
        if not (self.d_ry > 0 and self.d_rx > 0):
            raise ValueError("scene extents must be positive")


@dataclass
class MatchResult:
    """TP/FP labels in confidence order plus the matched index pairs."""

    confidences: np.ndarray
    labels: np.ndarray  # True = TP, in the same (descending confidence) order
    num_gt: int
    pairs: list[tuple[int, int]]  # (detection index, gt index) of each TP


def match_detections(
    detections: Sequence[tuple[float, Box3D]],
    gts: Sequence[Box3D],
    cfg: MatchConfig = MatchConfig(),
) -> MatchResult:
    """Label detections of one frame as TP/FP against the ground truth.

    ``detections`` are (confidence, world box) pairs.  Each detection,
    visited in descending confidence, matches the unmatched ground-truth
    box of highest IoU if that IoU reaches the threshold.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i][0])
    taken = [False] * len(gts)
    labels = np.zeros(len(detections), dtype=bool)
    confidences = np.array([detections[i][0] for i in order], dtype=float)
    pairs: list[tuple[int, int]] = []
    for rank, i in enumerate(order):
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            v = iou3d(detections[i][1], gt)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= cfg.iou_threshold:
            taken[best_j] = True
            labels[rank] = True
            pairs.append((i, best_j))
    return MatchResult(confidences, labels, len(gts), pairs)


def ap_11point(labels: Sequence[bool], num_gt: int) -> float:
    """11-point interpolated average precision over a ranked label sequence."""
    if num_gt < 1:
        raise NoGroundTruth("average precision needs at least one ground-truth object")
    labels = np.asarray(labels, dtype=bool)
    if labels.size == 0:
        return 0.0
    tp = np.cumsum(labels)
    fp = np.cumsum(~labels)
    recall = tp / num_gt
    precision = tp / (tp + fp)
    total = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        at_least = precision[recall >= r - 1e-12]
        total += float(at_least.max()) if at_least.size else 0.0
    return total / 11.0


def fps(t_proc: float) -> float:
    """Frames per second from the per-frame processing time in seconds."""
    if not (t_proc > 0):
        raise NonpositiveTime(f"processing time must be positive, got {t_proc}")
    return 1.0 / t_proc


def loc_precision(pred, gt, extent: SceneExtent) -> float:
    """Localization precision of a centroid pair (uses x and y only)."""
    dx = abs(float(pred[0]) - float(gt[0]))
    dy = abs(float(pred[1]) - float(gt[1]))
    return 1.0 - (dx / (extent.d_rx / 2) + dy / (extent.d_ry / 2))


def loc_error(pred, gt) -> float:
    """Summed absolute x/y centroid error in meters."""
    return abs(float(pred[0]) - float(gt[0])) + abs(float(pred[1]) - float(gt[1]))


def dim_precision(pred: Dimension3D, gt: Dimension3D) -> float:
    """Dimension precision: 1 - sum of relative absolute errors."""
    if not (gt.l > 0 and gt.w > 0 and gt.h > 0):
        raise NonpositiveGt("ground-truth dimensions must be positive")
    return 1.0 - (
        abs(pred.l - gt.l) / gt.l + abs(pred.w - gt.w) / gt.w + abs(pred.h - gt.h) / gt.h
    )


def dim_error(pred: Dimension3D, gt: Dimension3D) -> float:
    """Summed absolute dimension error in meters."""
    return abs(pred.l - gt.l) + abs(pred.w - gt.w) + abs(pred.h - gt.h)


@dataclass
class ErrorDistanceSeries:
    """Mean per-axis localization error binned by distance to the camera."""

    bin_centers: np.ndarray
    err_x: np.ndarray
    err_y: np.ndarray
    err_z: np.ndarray
    err_total: np.ndarray

    CSV_HEADER = "bin_center_m,err_x,err_y,err_z,err_total"

    def csv_text(self) -> str:
        lines = [self.CSV_HEADER]
        for c, x, y, z, t in zip(
            self.bin_centers, self.err_x, self.err_y, self.err_z, self.err_total
        ):
            lines.append(f"{c:.6g},{x:.9g},{y:.9g},{z:.9g},{t:.9g}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "bin_centers": self.bin_centers.tolist(),
            "err_x": self.err_x.tolist(),
            "err_y": self.err_y.tolist(),
            "err_z": self.err_z.tolist(),
            "err_total": self.err_total.tolist(),
        }


def error_vs_distance(
    records: Sequence[tuple[float, tuple[float, float, float]]], bin_width: float
) -> ErrorDistanceSeries:
    """Bin per-vehicle absolute errors by camera distance; empty bins omitted.

    ``records`` are (distance in meters, (|dx|, |dy|, |dz|)) tuples; the
    total is the sum of the three axis errors.
    """
    if not (bin_width > 0):
        raise ValueError("bin width must be positive")
    if not records:
        return ErrorDistanceSeries(*(np.array([]) for _ in range(5)))
    dist = np.array([r[0] for r in records], dtype=float)
    errs = np.abs(np.array([r[1] for r in records], dtype=float))
    idx = np.floor(dist / bin_width).astype(int)
    centers, xs, ys, zs, ts = [], [], [], [], []
    for b in sorted(set(idx.tolist())):
        sel = idx == b
        centers.append((b + 0.5) * bin_width)
        xs.append(errs[sel, 0].mean())
        ys.append(errs[sel, 1].mean())
        zs.append(errs[sel, 2].mean())
        ts.append(errs[sel].sum(axis=1).mean())
    return ErrorDistanceSeries(
        np.array(centers), np.array(xs), np.array(ys), np.array(zs), np.array(ts)
    )


@dataclass
class EvalReport:
    """Full evaluation output; serializes to JSON (and CSV for the curve)."""

    ap3d: dict[float, float]
    loc_precisions: list[float]
    loc_errors: list[float]
    dim_precisions: list[float]
    dim_errors: list[float]
    series: ErrorDistanceSeries
    fps: float | None = None
    num_gt: int = 0
    num_detections: int = 0
    matched_threshold: float | None = None

    def summary(self) -> dict:
        def mean(xs):
            return float(np.mean(xs)) if len(xs) else None

        return {
            "ap3d": {str(k): v for k, v in self.ap3d.items()},
            "mean_loc_precision": mean(self.loc_precisions),
            "mean_loc_error_m": mean(self.loc_errors),
            "mean_dim_precision": mean(self.dim_precisions),
            "mean_dim_error_m": mean(self.dim_errors),
            "fps": self.fps,
            "num_gt": self.num_gt,
            "num_detections": self.num_detections,
        }

    def to_dict(self) -> dict:
        return {
            **self.summary(),
            "matched_threshold": self.matched_threshold,
            "loc_precisions": self.loc_precisions,
            "loc_errors": self.loc_errors,
            "dim_precisions": self.dim_precisions,
            "dim_errors": self.dim_errors,
            "error_vs_distance": self.series.to_dict(),
        }

    def save_json(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def save_curve_csv(self, path: Path | str) -> None:
        Path(path).write_text(self.series.csv_text())


@dataclass
class FrameResult:
    """Detections and ground truth of one frame, both as world boxes.

    ``extent`` overrides the evaluation-wide extent for this frame, so
    manifests mixing scenes normalize each vehicle by its own scene.
    """

    detections: list[tuple[float, Box3D]]
    gts: list[Box3D]
    extent: SceneExtent | None = None


def evaluate_frames(
    frames: Sequence[FrameResult],
    extent: SceneExtent,
    thresholds: Sequence[float] = (0.5, 0.7),
    bin_width: float = 10.0,
    frame_time: float | None = None,
) -> EvalReport:
    """Evaluate detections over a set of frames.

    AP is computed per threshold by pooling confidence-ranked labels across
    frames (matching stays per-frame).  Per-vehicle localization/dimension
    metrics and the distance curve use the matches of the lowest threshold.
    """
    thresholds = sorted(thresholds)
    ap3d: dict[float, float] = {}
    report_thr = thresholds[0]
    loc_p, loc_e, dim_p, dim_e = [], [], [], []
    records: list[tuple[float, tuple[float, float, float]]] = []
    num_gt = sum(len(f.gts) for f in frames)
    num_det = sum(len(f.detections) for f in frames)

    for thr in thresholds:
        cfg = MatchConfig(thr)
        pooled_conf: list[float] = []
        pooled_labels: list[bool] = []
        for frame in frames:
            res = match_detections(frame.detections, frame.gts, cfg)
            pooled_conf.extend(res.confidences.tolist())
            pooled_labels.extend(res.labels.tolist())
            if thr == report_thr:
                for det_i, gt_j in res.pairs:
                    pred = frame.detections[det_i][1]
                    gt = frame.gts[gt_j]
                    loc_p.append(
                        loc_precision(pred.centroid, gt.centroid, frame.extent or extent)
                    )
                    loc_e.append(loc_error(pred.centroid, gt.centroid))
                    dim_p.append(dim_precision(pred.dim, gt.dim))
                    dim_e.append(dim_error(pred.dim, gt.dim))
                    dist = float(np.hypot(gt.centroid[0], gt.centroid[1]))
                    records.append(
                        (
                            dist,
                            (
                                abs(pred.centroid[0] - gt.centroid[0]),
                                abs(pred.centroid[1] - gt.centroid[1]),
                                abs(pred.centroid[2] - gt.centroid[2]),
                            ),
                        )
                    )
        order = np.argsort(-np.asarray(pooled_conf))
        labels = np.asarray(pooled_labels, dtype=bool)[order]
        ap3d[thr] = ap_11point(labels, num_gt) if num_gt else 0.0

    series = error_vs_distance(records, bin_width)
    return EvalReport(
        ap3d=ap3d,
        loc_precisions=loc_p,
        loc_errors=loc_e,
        dim_precisions=dim_p,
        dim_errors=dim_e,
        series=series,
        fps=fps(frame_time) if frame_time else None,
        num_gt=num_gt,
        num_detections=num_det,
        matched_threshold=report_thr,
    )
