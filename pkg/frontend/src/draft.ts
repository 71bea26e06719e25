// Draft state of the annotation being edited, plus the preview scheduler.
//
// The draft never computes geometry: every slider move or base-point drag
// requests a fresh /box/preview and the latest response is what gets
// rendered (and eventually saved).  Requests are debounced and strictly
// last-write-wins: an outdated in-flight response is never applied.

import type {
  AnnotationDoc,
  AnnotationObject,
  BoxPreviewRequest,
  BoxPreviewResponse,
  Rect2D,
  Vec2,
  Vec3,
} from "./types.js";
import { CLASS_NAMES } from "./types.js";

export interface Draft {
  classId: number;
  baseImage: Vec2; // ground contact point under the cursor, image px
  dim: Vec3; // (length, width, height) meters
  guidance: Rect2D | null; // optional user-drawn 2D box
  preview: BoxPreviewResponse | null; // latest service response
}

// Assemble the stored object from the latest preview.  The centroid pixel
// is projective and must come from the service (/project on the world
// centroid); averaging the eight world corners is exact for an
// axis-aligned box, so no geometry is computed client-side.
export function draftToObject(draft: Draft, centroidUv: Vec2): AnnotationObject | null {
  if (draft.preview === null || draft.preview.vertices_image.length !== 8) {
    return null;
  }
  return {
    class: CLASS_NAMES[draft.classId] ?? draft.classId,
    centroid_uv: centroidUv,
    vertices_uv: draft.preview.vertices_image,
    dim_lwh: draft.dim,
    centroid_xyz: centroidWorld(draft),
  };
}

export function centroidWorld(draft: Draft): Vec3 | undefined {
  const pts = draft.preview?.vertices_world;
  if (!pts || pts.length !== 8) {
    return undefined;
  }
  const sum: Vec3 = [0, 0, 0];
  for (const p of pts) {
    sum[0] += p[0];
    sum[1] += p[1];
    sum[2] += p[2];
  }
  return [sum[0] / 8, sum[1] / 8, sum[2] / 8];
}

// The unsaved-changes indicator: set exactly when the draft differs from
// the persisted document.
export function isDirty(persisted: AnnotationDoc, objects: AnnotationObject[]): boolean {
  return JSON.stringify(persisted.objects) !== JSON.stringify(objects);
}

export type PreviewFetcher = (
  req: BoxPreviewRequest,
  signal: AbortSignal,
) => Promise<BoxPreviewResponse>;

export const PREVIEW_DEBOUNCE_MS = 30;

// Debounced, superseding preview requests.  Each edit schedules a request
// PREVIEW_DEBOUNCE_MS in the future; a newer edit cancels the pending one
// and aborts anything already in flight.  Responses are applied only if
// they are still the newest request.
export class PreviewScheduler {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inflight: AbortController | null = null;
  private serial = 0;

  constructor(
    private fetcher: PreviewFetcher,
    private apply: (preview: BoxPreviewResponse) => void,
    private onError: (err: unknown) => void = () => {},
  ) {}

  schedule(req: BoxPreviewRequest): void {
    const id = ++this.serial;
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire(req, id);
    }, PREVIEW_DEBOUNCE_MS);
  }

  private fire(req: BoxPreviewRequest, id: number): void {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.fetcher(req, controller.signal).then(
      (preview) => {
        if (id === this.serial) {
          this.apply(preview);
        }
      },
      (err) => {
        if (id === this.serial && !controller.signal.aborted) {
          this.onError(err);
        }
      },
    );
  }
}
