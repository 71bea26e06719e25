// Wireframe rendering of a corner octet.  The eight corners arrive ordered
// floor ring first (1-2-3-4) then roof ring (5-6-7-8); twelve edges close
// the two rings and join them vertically.

import type { BoxPreviewResponse, Rect2D, Vec2 } from "./types.js";

export const BOX_EDGES: ReadonlyArray<readonly [number, number]> = [
  [0, 1], [1, 2], [2, 3], [3, 0], // floor ring
  [4, 5], [5, 6], [6, 7], [7, 4], // roof ring
  [0, 4], [1, 5], [2, 6], [3, 7], // verticals
];

export interface Segment {
  from: Vec2;
  to: Vec2;
}

export interface DrawList {
  segments: Segment[];
  corners: Vec2[];
  rect: Rect2D;
}

// Build the draw list straight from a preview response.  Corner positions
// are passed through untouched so the rendering is pixel-identical to what
// the service computed.
export function buildDrawList(preview: BoxPreviewResponse): DrawList {
  const corners = preview.vertices_image;
  const segments = BOX_EDGES.map(([a, b]) => ({ from: corners[a], to: corners[b] }));
  return { segments, corners, rect: preview.rect2d };
}

export function drawWireframe(
  ctx: CanvasRenderingContext2D,
  drawList: DrawList,
  color = "#27c24c",
): void {
  ctx.save();
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (const seg of drawList.segments) {
    ctx.moveTo(seg.from[0], seg.from[1]);
    ctx.lineTo(seg.to[0], seg.to[1]);
  }
  ctx.stroke();
  ctx.fillStyle = color;
  for (const [u, v] of drawList.corners) {
    ctx.fillRect(u - 2, v - 2, 4, 4);
  }
  ctx.restore();
}

export function drawRect(
  ctx: CanvasRenderingContext2D,
  rect: Rect2D,
  color = "#4aa3ff",
): void {
  ctx.save();
  ctx.strokeStyle = color;
  ctx.setLineDash([6, 4]);
  ctx.strokeRect(rect.x_min, rect.y_min, rect.x_max - rect.x_min, rect.y_max - rect.y_min);
  ctx.restore();
}
