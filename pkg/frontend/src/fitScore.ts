// Fit score between the projected box rectangle (from the service) and a
// user-drawn 2D guidance rectangle: plain area IoU, same arithmetic as the
// service's own rectangle IoU so the displayed score matches it exactly.

import type { Rect2D } from "./types.js";

export function rectIoU(a: Rect2D, b: Rect2D): number {
  const iw = Math.max(0, Math.min(a.x_max, b.x_max) - Math.max(a.x_min, b.x_min));
  const ih = Math.max(0, Math.min(a.y_max, b.y_max) - Math.max(a.y_min, b.y_min));
  const inter = iw * ih;
  const areaA = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const areaB = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  const union = areaA + areaB - inter;
  if (union <= 0) {
    return 0;
  }
  return inter / union;
}

export function fitScore(projected: Rect2D, guidance: Rect2D | null): number | null {
  return guidance === null ? null : rectIoU(projected, guidance);
}
