"""The six training loss terms as pure numerical functions.

Each loss comes with a hand-derived analytic gradient with respect to the
prediction it penalizes, verified against central finite differences (see
:func:`finite_difference_gradient`).  All losses normalize by the number
of annotated objects N (clamped to at least one) and are zero when the
prediction matches the target.

Conventions shared by the masked L1 losses: ``mask`` is a boolean (H, W)
grid marking ground-truth peak cells, the per-cell penalty is the plain
sum of absolute channel errors, and an empty mask yields 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import calib
from .box3d import Rect2D, UNIT_OFFSETS, ciou_loss, min_external_rect
from .errors import EmptyInput, ShapeMismatch

# Heatmap predictions are clamped away from {0, 1} before the logarithms.
CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class FocalParams:
    """Exponents balancing easy/hard and positive/negative heatmap cells."""

    alpha: float = 2.0
    beta: float = 4.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("focal exponents must be positive")


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights of the combined training loss."""

    lambda_c: float = 1.0
    lambda_co: float = 1.0
    lambda_v: float = 0.1
    lambda_s: float = 0.1
    lambda_proj: float = 0.1
    lambda_iou: float = 1.0

    def __post_init__(self) -> None:
        if any(
            w < 0
            for w in (
                self.lambda_c,
                self.lambda_co,
                self.lambda_v,
                self.lambda_s,
                self.lambda_proj,
                self.lambda_iou,
            )
        ):
            raise ValueError("loss weights must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.lambda_c,
                self.lambda_co,
                self.lambda_v,
                self.lambda_s,
                self.lambda_proj,
                self.lambda_iou,
            ]
        )


def _check_same_shape(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {gt.shape}")


def _num_positives(gt: np.ndarray) -> int:
    return max(int(np.count_nonzero(gt == 1.0)), 1)


def focal_loss(
    pred: np.ndarray, gt: np.ndarray, params: FocalParams = FocalParams()
) -> float:
    """Penalty focusing on hard heatmap cells.

    Cells where the target is exactly 1 are positives and contribute
    (1-p)^alpha * -log(p); all other cells contribute
    p^alpha * (1-t)^beta * -log(1-p), down-weighting negatives near a peak
    through the Gaussian target value t.  Natural logarithm throughout.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    _check_same_shape(pred, gt)
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    pos = gt == 1.0
    pos_term = np.where(pos, (1.0 - p) ** params.alpha * np.log(p), 0.0)
    neg_term = np.where(
        ~pos, p**params.alpha * (1.0 - gt) ** params.beta * np.log1p(-p), 0.0
    )
    return float(-(pos_term.sum() + neg_term.sum()) / _num_positives(gt))


def focal_loss_grad(
    pred: np.ndarray, gt: np.ndarray, params: FocalParams = FocalParams()
) -> np.ndarray:
    """d(focal_loss)/d(pred); zero where the clamp is active."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    _check_same_shape(pred, gt)
    n = _num_positives(gt)
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    pos = gt == 1.0
    a, b = params.alpha, params.beta
    d_pos = -a * (1.0 - p) ** (a - 1) * np.log(p) + (1.0 - p) ** a / p
    d_neg = (1.0 - gt) ** b * (
        a * p ** (a - 1) * np.log1p(-p) - p**a / (1.0 - p)
    )
    grad = np.where(pos, -d_pos / n, -d_neg / n)
    active = (pred > CLAMP_EPS) & (pred < 1.0 - CLAMP_EPS)
    return np.where(active, grad, 0.0)


def _masked_l1(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    _check_same_shape(pred, gt)
    if mask.shape != pred.shape[:2]:
        raise ShapeMismatch(f"mask {mask.shape} vs grid {pred.shape[:2]}")
    n = int(np.count_nonzero(mask))
    if n == 0:
        return 0.0
    diff = np.abs(pred - gt)[mask]
    return float(diff.sum() / n)


def _masked_l1_grad(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    _check_same_shape(pred, gt)
    n = int(np.count_nonzero(mask))
    grad = np.zeros_like(np.asarray(pred, dtype=float))
    if n == 0:
        return grad
    grad[mask] = np.sign(np.asarray(pred, float) - np.asarray(gt, float))[mask] / n
    return grad


def _channel_checked(channels: int, name: str) -> Callable:
    def op(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
        pred = np.asarray(pred, dtype=float)
        if pred.ndim != 3 or pred.shape[2] != channels:
            raise ShapeMismatch(f"{name} expects {channels} channels, got {pred.shape}")
        return _masked_l1(pred, np.asarray(gt, dtype=float), np.asarray(mask, bool))

    return op


offset_loss = _channel_checked(2, "offset_loss")
vertex_loss = _channel_checked(16, "vertex_loss")
dim_loss = _channel_checked(3, "dim_loss")


def l1_loss_grad(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Subgradient of the masked L1 losses (0 at exact equality)."""
    return _masked_l1_grad(
        np.asarray(pred, dtype=float), np.asarray(gt, dtype=float), np.asarray(mask, bool)
    )


def _rebuilt_corners(anchor: np.ndarray, dims: np.ndarray) -> np.ndarray:
    """Eight world corners grown from a P2 anchor with raw (l, w, h) values."""
    scale = np.array([dims[1], dims[0], dims[2]])  # x: w, y: l, z: h
    return anchor + UNIT_OFFSETS * scale


def reprojection_loss(
    proj: calib.ProjectionMatrix | np.ndarray,
    pred_dims: np.ndarray,
    pred_vertices: np.ndarray,
    anchors: np.ndarray,
    mask: np.ndarray,
) -> float:
    """Consistency between predicted corners and corners rebuilt from dimensions.

    Per object, a box is grown from the ground-truth minimum corner with
    the predicted dimensions, projected into the image, and compared to
    the predicted corners (both in the pixel frame of ``proj``) by summed
    absolute differences; the result is averaged over objects.
    """
    pred_dims = np.asarray(pred_dims, dtype=float)
    pred_vertices = np.asarray(pred_vertices, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    mask = np.asarray(mask, bool)
    if pred_dims.shape[2:] != (3,) or pred_vertices.shape[2:] != (16,):
        raise ShapeMismatch("expected (H, W, 3) dims and (H, W, 16) vertices")
    n = int(np.count_nonzero(mask))
    if n == 0:
        return 0.0
    total = 0.0
    for y, x in zip(*np.nonzero(mask)):
        corners = _rebuilt_corners(anchors[y, x], pred_dims[y, x])
        projected = calib.world_to_image(proj, corners).reshape(16)
        total += float(np.abs(projected - pred_vertices[y, x]).sum())
    return total / n


def reprojection_loss_grad_vertices(
    proj: calib.ProjectionMatrix | np.ndarray,
    pred_dims: np.ndarray,
    pred_vertices: np.ndarray,
    anchors: np.ndarray,
    mask: np.ndarray,
) -> np.ndarray:
    """d(reprojection_loss)/d(pred_vertices)."""
    pred_dims = np.asarray(pred_dims, dtype=float)
    pred_vertices = np.asarray(pred_vertices, dtype=float)
    mask = np.asarray(mask, bool)
    grad = np.zeros_like(pred_vertices)
    n = int(np.count_nonzero(mask))
    if n == 0:
        return grad
    for y, x in zip(*np.nonzero(mask)):
        corners = _rebuilt_corners(np.asarray(anchors, float)[y, x], pred_dims[y, x])
        projected = calib.world_to_image(proj, corners).reshape(16)
        grad[y, x] = np.sign(pred_vertices[y, x] - projected) / n
    return grad


def reprojection_loss_grad_dims(
    proj: calib.ProjectionMatrix | np.ndarray,
    pred_dims: np.ndarray,
    pred_vertices: np.ndarray,
    anchors: np.ndarray,
    mask: np.ndarray,
) -> np.ndarray:
    """d(reprojection_loss)/d(pred_dims), chained through the projection."""
    m = proj.matrix if isinstance(proj, calib.ProjectionMatrix) else np.asarray(proj, float)
    pred_dims = np.asarray(pred_dims, dtype=float)
    pred_vertices = np.asarray(pred_vertices, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    mask = np.asarray(mask, bool)
    grad = np.zeros_like(pred_dims)
    n = int(np.count_nonzero(mask))
    if n == 0:
        return grad
    h1, h2, h3 = m[0, :3], m[1, :3], m[2, :3]
    for y, x in zip(*np.nonzero(mask)):
        dims = pred_dims[y, x]
        corners = _rebuilt_corners(anchors[y, x], dims)
        num_u = corners @ h1 + m[0, 3]
        num_v = corners @ h2 + m[1, 3]
        den = corners @ h3 + m[2, 3]
        proj_uv = np.stack([num_u / den, num_v / den], axis=1)
        sgn = np.sign(proj_uv.reshape(16) - pred_vertices[y, x]).reshape(8, 2)
        # dP/d(l, w, h): corner offsets move along y, x, z respectively.
        dP = np.zeros((8, 3, 3))
        dP[:, 1, 0] = UNIT_OFFSETS[:, 1]  # d/dl
        dP[:, 0, 1] = UNIT_OFFSETS[:, 0]  # d/dw
        dP[:, 2, 2] = UNIT_OFFSETS[:, 2]  # d/dh
        for i in range(8):
            du_dP = (h1 * den[i] - num_u[i] * h3) / den[i] ** 2
            dv_dP = (h2 * den[i] - num_v[i] * h3) / den[i] ** 2
            for k in range(3):
                grad[y, x, k] += (
                    sgn[i, 0] * float(du_dP @ dP[i, :, k])
                    + sgn[i, 1] * float(dv_dP @ dP[i, :, k])
                ) / n
    return grad


def iou_constraint_loss(
    pred_vertices: np.ndarray, gt_vertices: np.ndarray, mask: np.ndarray
) -> float:
    """Mean complete-IoU loss between the bounding rectangles of the corner octets."""
    pred_vertices = np.asarray(pred_vertices, dtype=float)
    gt_vertices = np.asarray(gt_vertices, dtype=float)
    mask = np.asarray(mask, bool)
    if pred_vertices.shape[2:] != (16,) or gt_vertices.shape != pred_vertices.shape:
        raise ShapeMismatch("expected matching (H, W, 16) vertex grids")
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise EmptyInput("IoU constraint needs at least one object")
    total = 0.0
    for y, x in zip(*np.nonzero(mask)):
        rect_p = min_external_rect(pred_vertices[y, x].reshape(8, 2))
        rect_g = min_external_rect(gt_vertices[y, x].reshape(8, 2))
        total += ciou_loss(rect_p, rect_g)
    return total / n


def ciou_loss_grad(pred: Rect2D, gt: Rect2D) -> np.ndarray:
    """Exact d(ciou_loss)/d(x_min, y_min, x_max, y_max) of the prediction.

    Differentiates every term of the loss, including the aspect-ratio
    trade-off factor alpha, so it matches finite differences of the value
    function away from min/max kinks.
    """
    px1, py1, px2, py2 = pred.as_array()
    gx1, gy1, gx2, gy2 = gt.as_array()
    w, h = px2 - px1, py2 - py1
    wg, hg = gx2 - gx1, gy2 - gy1

    d = np.zeros(4)

    # Intersection / union.
    wi = min(px2, gx2) - max(px1, gx1)
    hi = min(py2, gy2) - max(py1, gy1)
    inter = max(wi, 0.0) * max(hi, 0.0)
    union = w * h + wg * hg - inter
    iou = inter / union if union > 0 else 0.0

    dI = np.zeros(4)
    if wi > 0 and hi > 0:
        if px1 > gx1:
            dI[0] = -hi
        if py1 > gy1:
            dI[1] = -wi
        if px2 < gx2:
            dI[2] = hi
        if py2 < gy2:
            dI[3] = wi
    dA = np.array([-h, -w, h, w])
    dU = dA - dI
    dIoU = (dI * union - inter * dU) / union**2

    # Center-distance term.
    bx, by = (px1 + px2) / 2, (py1 + py2) / 2
    bgx, bgy = (gx1 + gx2) / 2, (gy1 + gy2) / 2
    rho2 = (bx - bgx) ** 2 + (by - bgy) ** 2
    drho2 = np.array([bx - bgx, by - bgy, bx - bgx, by - bgy])
    cw = max(px2, gx2) - min(px1, gx1)
    ch = max(py2, gy2) - min(py1, gy1)
    c2 = cw * cw + ch * ch
    dc2 = np.zeros(4)
    if px1 < gx1:
        dc2[0] = -2 * cw
    if py1 < gy1:
        dc2[1] = -2 * ch
    if px2 > gx2:
        dc2[2] = 2 * cw
    if py2 > gy2:
        dc2[3] = 2 * ch

    # Aspect-ratio term with its trade-off factor.
    q = math.atan(wg / hg) - math.atan(w / h)
    v = 4.0 / math.pi**2 * q * q
    denom_q = w * w + h * h
    dq = np.array([h, -w, -h, w]) / denom_q  # d(-atan(w/h)) per corner
    dv = 8.0 / math.pi**2 * q * dq
    s = (1.0 - iou) + v
    alpha = v / s if v > 0 else 0.0
    dalpha = (dv * (1.0 - iou) + v * dIoU) / s**2 if v > 0 else np.zeros(4)

    d = -dIoU + (drho2 * c2 - rho2 * dc2) / c2**2 + dalpha * v + alpha * dv
    return d


def iou_constraint_loss_grad_vertices(
    pred_vertices: np.ndarray, gt_vertices: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """d(iou_constraint_loss)/d(pred_vertices).

    The rectangle corners are min/max over the octet, so each rectangle
    derivative flows to the single extremal corner coordinate (unique away
    from kinks).
    """
    pred_vertices = np.asarray(pred_vertices, dtype=float)
    gt_vertices = np.asarray(gt_vertices, dtype=float)
    mask = np.asarray(mask, bool)
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise EmptyInput("IoU constraint needs at least one object")
    grad = np.zeros_like(pred_vertices)
    for y, x in zip(*np.nonzero(mask)):
        octet = pred_vertices[y, x].reshape(8, 2)
        rect_p = min_external_rect(octet)
        rect_g = min_external_rect(gt_vertices[y, x].reshape(8, 2))
        d_rect = ciou_loss_grad(rect_p, rect_g) / n
        g = np.zeros((8, 2))
        g[int(np.argmin(octet[:, 0])), 0] += d_rect[0]
        g[int(np.argmin(octet[:, 1])), 1] += d_rect[1]
        g[int(np.argmax(octet[:, 0])), 0] += d_rect[2]
        g[int(np.argmax(octet[:, 1])), 1] += d_rect[3]
        grad[y, x] = g.reshape(16)
    return grad


def total_loss(components, weights: LossWeights = LossWeights()) -> float:
    """Weighted sum of the six loss terms.

    ``components`` is the sequence (classification, offset, vertex,
    dimension, reprojection, iou).
    """
    comps = np.asarray(components, dtype=float)
    if comps.shape != (6,):
        raise ShapeMismatch(f"expected six loss components, got shape {comps.shape}")
    if not np.all(np.isfinite(comps)):
        raise ValueError("loss components must be finite")
    return float(comps @ weights.as_array())


def finite_difference_gradient(
    fn: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of a scalar functional over an array.

    The verification harness for the analytic gradients above; evaluates
    ``fn`` twice per entry.
    """
    if not (eps > 0):
        raise ValueError("step size must be positive")
    x = np.array(x, dtype=float)  # private copy; entries are perturbed in place
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + eps
        hi = fn(x)
        xf[i] = orig - eps
        lo = fn(x)
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * eps)
    return grad
