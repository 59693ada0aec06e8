/**
 * Browser entry point: wires the controller to the DOM. Drag to orbit,
 * shift-drag for the selection box, scribble mode paints conditions, and the
 * button row drives propose / accept / retry / reject / undo plus trajectory
 * recording.
 */

import { GatewayClient } from "./api.js";
import { AuthorController } from "./controller.js";
import { ScribbleLayer, type PngEncoder } from "./scribble.js";
import { boxFromDrag } from "./selection.js";
import type { GatewayEvent } from "./types.js";

const canvasEncoder: PngEncoder = async (rgba, width, height) => {
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2d canvas unavailable");
  }
  const copy = new Uint8ClampedArray(rgba.length);
  copy.set(rgba);
  ctx.putImageData(new ImageData(copy, width, height), 0, 0);
  return canvas.toDataURL("image/png").split(",")[1];
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function refreshView(controller: AuthorController, view: HTMLImageElement) {
  const { png, coverage } = await controller.client.render(
    controller.sessionId, controller.pose);
  view.src = URL.createObjectURL(new Blob([png], { type: "image/png" }));
  el<HTMLSpanElement>("coverage").textContent = `${(coverage * 100).toFixed(1)}% covered`;
}

function showSummary(controller: AuthorController) {
  const s = controller.state.summary;
  if (s) {
    el<HTMLSpanElement>("status").textContent =
      `step ${s.steps - 1} | ${s.mesh.vertex_count} vertices | ` +
      `${s.mesh.face_count} faces${controller.state.pendingPreviewId ? " | preview pending" : ""}`;
  }
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const gatewayUrl = params.get("gateway") ?? window.location.origin;
  const sessionId = params.get("session");
  if (!sessionId) {
    el<HTMLDivElement>("banner").textContent =
      "pass ?session=<id>&gateway=<url> to connect";
    return;
  }

  const client = new GatewayClient(gatewayUrl);
  const controller = new AuthorController(client, sessionId, 512, 512);
  const view = el<HTMLImageElement>("view");
  const preview = el<HTMLImageElement>("preview");
  const scribble = new ScribbleLayer(512, 512);

  const connected = await controller.connect((ev: GatewayEvent) => {
    if (ev.type === "preview_ready") {
      el<HTMLDivElement>("banner").textContent = "preview ready";
    } else if (ev.type === "progress") {
      el<HTMLDivElement>("banner").textContent =
        `working: ${String(ev.payload["stage"] ?? "...")}`;
    }
  });
  if (!connected) {
    el<HTMLDivElement>("banner").textContent = controller.state.error ?? "connection failed";
    return;
  }
  showSummary(controller);
  await refreshView(controller, view);

  // --- camera + selection interaction
  let dragging: { x: number; y: number; box: boolean } | null = null;
  view.addEventListener("pointerdown", (ev) => {
    dragging = { x: ev.offsetX, y: ev.offsetY, box: ev.shiftKey };
  });
  view.addEventListener("pointerup", async (ev) => {
    if (!dragging) {
      return;
    }
    if (dragging.box) {
      const scale = 512 / view.clientWidth;
      controller.setSelection(boxFromDrag(
        dragging.x * scale, dragging.y * scale,
        ev.offsetX * scale, ev.offsetY * scale));
    } else {
      controller.orbitBy((ev.offsetX - dragging.x) * 0.005,
                         (ev.offsetY - dragging.y) * 0.005);
      await refreshView(controller, view);
    }
    dragging = null;
  });

  // --- scribble painting (toggle with the checkbox)
  let painting = false;
  preview.addEventListener("pointerdown", () => (painting = true));
  preview.addEventListener("pointerup", () => (painting = false));
  preview.addEventListener("pointermove", (ev) => {
    if (!painting || !el<HTMLInputElement>("scribble-mode").checked) {
      return;
    }
    const scale = 512 / preview.clientWidth;
    scribble.addStroke({
      points: [{ x: ev.offsetX * scale, y: ev.offsetY * scale }],
      radius: 4,
      color: [255, 255, 255],
    });
  });

  // --- protocol buttons
  el<HTMLButtonElement>("propose").onclick = async () => {
    controller.state.prompt = el<HTMLInputElement>("prompt").value;
    controller.state.seed = Number(el<HTMLInputElement>("seed").value) || 0;
    controller.state.conditions = scribble.isEmpty
      ? []
      : [await scribble.toCondition(canvasEncoder)];
    const result = await controller.propose();
    preview.src = `data:image/png;base64,${result.image_png_b64}`;
    showSummary(controller);
  };
  el<HTMLButtonElement>("accept").onclick = async () => {
    await controller.accept();
    showSummary(controller);
    await refreshView(controller, view);
  };
  el<HTMLButtonElement>("retry").onclick = async () => {
    const result = await controller.retry();
    el<HTMLInputElement>("seed").value = String(controller.state.seed);
    preview.src = `data:image/png;base64,${result.image_png_b64}`;
  };
  el<HTMLButtonElement>("reject").onclick = async () => {
    await controller.reject();
    showSummary(controller);
  };
  el<HTMLButtonElement>("undo").onclick = async () => {
    await controller.undo();
    showSummary(controller);
    await refreshView(controller, view);
  };

  // --- trajectory recording
  el<HTMLButtonElement>("keyframe").onclick = () => {
    controller.recordKeyframe();
    el<HTMLButtonElement>("download").disabled = controller.state.keyframes.length === 0;
  };
  el<HTMLButtonElement>("download").onclick = () => {
    const doc = controller.exportTrajectory(10);
    const blob = new Blob([JSON.stringify(doc, null, 2)], { type: "application/json" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "trajectory.json";
    link.click();
  };
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  void start();
}
