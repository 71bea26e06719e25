// DOM wiring of the annotation tool: scene/frame browser on the left, the
// frame with the live wireframe overlay in the middle, class picker and
// dimension sliders on the right.  All state lives in small pure modules;
// this file only connects them to the page.

import { ApiError, Client } from "./api.js";
import {
  Draft,
  PreviewScheduler,
  centroidWorld,
  draftToObject,
  isDirty,
} from "./draft.js";
import { fitScore } from "./fitScore.js";
import { buildDrawList, drawRect, drawWireframe } from "./wireframe.js";
import type { AnnotationDoc, AnnotationObject, Rect2D, SceneDoc, Vec2 } from "./types.js";
import { CLASS_NAMES } from "./types.js";

interface Elements {
  sceneSelect: HTMLSelectElement;
  frameInput: HTMLInputElement;
  canvas: HTMLCanvasElement;
  image: HTMLImageElement;
  classPicker: HTMLSelectElement;
  sliders: { l: HTMLInputElement; w: HTMLInputElement; h: HTMLInputElement };
  sliderLabels: { l: HTMLElement; w: HTMLElement; h: HTMLElement };
  fitLabel: HTMLElement;
  dirtyLabel: HTMLElement;
  status: HTMLElement;
  saveButton: HTMLButtonElement;
  addButton: HTMLButtonElement;
  guidanceButton: HTMLButtonElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startApp(baseUrl = ""): void {
  const client = new Client(baseUrl);
  const ui: Elements = {
    sceneSelect: el("scene-select"),
    frameInput: el("frame-input"),
    canvas: el("overlay"),
    image: el("frame-image"),
    classPicker: el("class-picker"),
    sliders: { l: el("dim-l"), w: el("dim-w"), h: el("dim-h") },
    sliderLabels: { l: el("dim-l-value"), w: el("dim-w-value"), h: el("dim-h-value") },
    fitLabel: el("fit-score"),
    dirtyLabel: el("dirty-flag"),
    status: el("status"),
    saveButton: el("save-button"),
    addButton: el("add-button"),
    guidanceButton: el("guidance-button"),
  };

  let scene: SceneDoc | null = null;
  let persisted: AnnotationDoc = { frame_id: "", revision: 0, scene_id: "", objects: [] };
  let committed: AnnotationObject[] = [];
  let draft: Draft = {
    classId: 0,
    baseImage: [960, 700],
    dim: [4.5, 1.8, 1.45],
    guidance: null,
    preview: null,
  };
  let drawingGuidance = false;
  let guidanceStart: Vec2 | null = null;

  const scheduler = new PreviewScheduler(
    (req, signal) => client.boxPreview(req, signal),
    (preview) => {
      draft.preview = preview;
      render();
    },
    (err) => setStatus(describe(err), true),
  );

  function setStatus(text: string, isError = false): void {
    ui.status.textContent = text;
    ui.status.className = isError ? "status error" : "status";
  }

  function describe(err: unknown): string {
    if (err instanceof ApiError) {
      const d = err.detail as any;
      if (d && d.field) return `rejected: ${d.field}: ${d.error ?? ""}`;
      if (d && d.error) return `rejected: ${d.error}`;
      return `service error ${err.status}`;
    }
    return String(err);
  }

  function requestPreview(): void {
    if (!scene) return;
    scheduler.schedule({
      scene: scene.scene,
      base_image: draft.baseImage,
      dim: draft.dim,
      class_id: draft.classId,
    });
  }

  function currentObjects(): AnnotationObject[] {
    return committed;
  }

  function render(): void {
    const ctx = ui.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, ui.canvas.width, ui.canvas.height);
    for (const obj of committed) {
      drawWireframe(
        ctx,
        buildDrawList({
          vertices_world: [],
          vertices_image: obj.vertices_uv,
          rect2d: { x_min: 0, y_min: 0, x_max: 0, y_max: 0 },
        }),
        "#888888",
      );
    }
    if (draft.preview) {
      const drawList = buildDrawList(draft.preview);
      drawWireframe(ctx, drawList);
      drawRect(ctx, drawList.rect);
    }
    if (draft.guidance) {
      drawRect(ctx, draft.guidance, "#ff8c4a");
    }
    const score = draft.preview ? fitScore(draft.preview.rect2d, draft.guidance) : null;
    ui.fitLabel.textContent = score === null ? "fit: -" : `fit: ${score.toFixed(3)}`;
    ui.dirtyLabel.textContent = isDirty(persisted, currentObjects())
      ? "unsaved changes"
      : "saved";
    ui.sliderLabels.l.textContent = `${draft.dim[0].toFixed(2)} m`;
    ui.sliderLabels.w.textContent = `${draft.dim[1].toFixed(2)} m`;
    ui.sliderLabels.h.textContent = `${draft.dim[2].toFixed(2)} m`;
  }

  async function loadScenes(): Promise<void> {
    const scenes = await client.listScenes();
    ui.sceneSelect.replaceChildren(
      ...scenes.map((s) => new Option(`${s.scene} (${s.image_width}x${s.image_height})`, s.scene)),
    );
    if (scenes.length) {
      scene = scenes[0];
      ui.canvas.width = scene.image_width;
      ui.canvas.height = scene.image_height;
    }
  }

  async function loadFrame(): Promise<void> {
    if (!scene) return;
    const frameId = ui.frameInput.value || "000000";
    persisted = await client.getAnnotations(frameId);
    committed = persisted.objects.slice();
    ui.image.src = client.frameImageUrl(frameId);
    ui.image.onerror = () => {
      ui.image.removeAttribute("src");
    };
    setStatus(`frame ${frameId}: revision ${persisted.revision}, ${committed.length} object(s)`);
    render();
  }

  ui.sceneSelect.onchange = async () => {
    scene = await client.getScene(ui.sceneSelect.value);
    ui.canvas.width = scene.image_width;
    ui.canvas.height = scene.image_height;
    await loadFrame();
    requestPreview();
  };
  ui.frameInput.onchange = () => void loadFrame();

  ui.classPicker.replaceChildren(
    ...CLASS_NAMES.map((name, i) => new Option(name, String(i))),
  );
  ui.classPicker.onchange = () => {
    draft.classId = Number(ui.classPicker.value);
    requestPreview();
  };

  for (const key of ["l", "w", "h"] as const) {
    ui.sliders[key].oninput = () => {
      const idx = { l: 0, w: 1, h: 2 }[key];
      draft.dim = [...draft.dim];
      draft.dim[idx] = Number(ui.sliders[key].value);
      requestPreview();
      render();
    };
  }

  ui.canvas.onpointerdown = (ev) => {
    const rect = ui.canvas.getBoundingClientRect();
    const p: Vec2 = [
      ((ev.clientX - rect.left) / rect.width) * ui.canvas.width,
      ((ev.clientY - rect.top) / rect.height) * ui.canvas.height,
    ];
    if (drawingGuidance) {
      guidanceStart = p;
      return;
    }
    draft.baseImage = p;
    requestPreview();
  };
  ui.canvas.onpointerup = (ev) => {
    if (!drawingGuidance || !guidanceStart) return;
    const rect = ui.canvas.getBoundingClientRect();
    const p: Vec2 = [
      ((ev.clientX - rect.left) / rect.width) * ui.canvas.width,
      ((ev.clientY - rect.top) / rect.height) * ui.canvas.height,
    ];
    draft.guidance = {
      x_min: Math.min(guidanceStart[0], p[0]),
      y_min: Math.min(guidanceStart[1], p[1]),
      x_max: Math.max(guidanceStart[0], p[0]),
      y_max: Math.max(guidanceStart[1], p[1]),
    };
    drawingGuidance = false;
    guidanceStart = null;
    ui.guidanceButton.textContent = "draw 2D guidance";
    render();
  };

  ui.guidanceButton.onclick = () => {
    drawingGuidance = !drawingGuidance;
    if (!drawingGuidance) draft.guidance = null;
    ui.guidanceButton.textContent = drawingGuidance ? "click-drag on image..." : "draw 2D guidance";
    render();
  };

  ui.addButton.onclick = async () => {
    if (!scene || !draft.preview) return;
    const world = centroidWorld(draft);
    if (!world) return;
    const [centroidUv] = await client.project(scene.scene, [world]);
    const obj = draftToObject(draft, centroidUv);
    if (obj) {
      committed = [...committed, obj];
      render();
    }
  };

  ui.saveButton.onclick = async () => {
    if (!scene) return;
    const frameId = ui.frameInput.value || "000000";
    try {
      persisted = await client.putAnnotations(
        frameId,
        persisted.revision,
        scene.scene,
        currentObjects(),
      );
      committed = persisted.objects.slice();
      setStatus(`saved revision ${persisted.revision}`);
    } catch (err) {
      setStatus(describe(err), true);
      if (err instanceof ApiError && err.status === 409) {
        // stale revision: reload the winner and let the user re-apply
        persisted = await client.getAnnotations(frameId);
        committed = persisted.objects.slice();
      }
    }
    render();
  };

  void loadScenes().then(() => {
    void loadFrame();
    requestPreview();
  });
}
