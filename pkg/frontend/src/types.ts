// Wire types of the annotation service API.  All coordinates are pixels in
// the scene's native resolution; dimensions are meters.

export type Vec2 = [number, number];
export type Vec3 = [number, number, number];

export interface SceneDoc {
  scene: string;
  f: number;
  phi: number;
  theta: number;
  h: number;
  h_unit: "m" | "mm";
  cx: number;
  cy: number;
  image_width: number;
  image_height: number;
  D_ry: number;
  D_rx: number;
}

export interface Rect2D {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export interface BoxPreviewRequest {
  scene: string;
  dim: Vec3; // (length, width, height) in meters
  class_id: number;
  base_image?: Vec2;
  base_world?: Vec2;
}

export interface BoxPreviewResponse {
  vertices_world: Vec3[];
  vertices_image: Vec2[];
  rect2d: Rect2D;
}

export interface AnnotationObject {
  class: string | number;
  centroid_uv: Vec2;
  vertices_uv: Vec2[];
  dim_lwh: Vec3;
  centroid_xyz?: Vec3;
}

export interface AnnotationDoc {
  frame_id: string;
  revision: number;
  scene_id: string;
  objects: AnnotationObject[];
}

export const CLASS_NAMES = ["car", "truck", "bus"] as const;
