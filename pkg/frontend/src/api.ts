// Thin typed client for the annotation service.  The client performs no
// projective math of its own: every wireframe, rectangle, and world point
// shown in the UI comes verbatim from these endpoints.

import type {
  AnnotationDoc,
  AnnotationObject,
  BoxPreviewRequest,
  BoxPreviewResponse,
  SceneDoc,
  Vec2,
  Vec3,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`service returned ${status}: ${JSON.stringify(detail)}`);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    throw new ApiError(resp.status, body && (body as any).detail ? (body as any).detail : body);
  }
  return body as T;
}

export class Client {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async listScenes(): Promise<SceneDoc[]> {
    return parse(await fetch(this.url("/scenes")));
  }

  async getScene(id: string): Promise<SceneDoc> {
    return parse(await fetch(this.url(`/scenes/${encodeURIComponent(id)}`)));
  }

  async project(scene: string, pointsWorld: Vec3[]): Promise<Vec2[]> {
    const doc = await parse<{ points_image: Vec2[] }>(
      await fetch(this.url("/project"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ scene, points_world: pointsWorld }),
      }),
    );
    return doc.points_image;
  }

  async boxPreview(
    req: BoxPreviewRequest,
    signal?: AbortSignal,
  ): Promise<BoxPreviewResponse> {
    return parse(
      await fetch(this.url("/box/preview"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(req),
        signal,
      }),
    );
  }

  async getAnnotations(frameId: string): Promise<AnnotationDoc> {
    return parse(await fetch(this.url(`/frames/${encodeURIComponent(frameId)}/annotations`)));
  }

  async putAnnotations(
    frameId: string,
    revision: number,
    sceneId: string,
    objects: AnnotationObject[],
  ): Promise<AnnotationDoc> {
    return parse(
      await fetch(this.url(`/frames/${encodeURIComponent(frameId)}/annotations`), {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ revision, scene_id: sceneId, objects }),
      }),
    );
  }

  frameImageUrl(frameId: string): string {
    return this.url(`/frames/${encodeURIComponent(frameId)}/image`);
  }
}
