import { describe, expect, it } from "vitest";

import { GatewayClient, GatewayError } from "../src/api.js";
import { AuthorController } from "../src/controller.js";
import type { GatewayEvent } from "../src/types.js";

/** In-memory stand-in for the gateway: deterministic previews per seed,
 * one-pending rule, request log via the client. */
function fakeGateway() {
  const state = { steps: 1, pending: false, lastSeed: -1 };
  const summary = () => ({
    steps: state.steps,
    pending: state.pending,
    mesh: { vertex_count: 100 * state.steps, face_count: 180 * state.steps,
            bbox_min: [0, 0, 0], bbox_max: [1, 1, 1], anomaly_count: 0 },
    envmap: { enabled: true, valid_texels: 0 },
    state_hash: `hash-${state.steps}`,
  });
  const json = (doc: unknown, status = 200) =>
    new Response(JSON.stringify(doc), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    const path = new URL(url).pathname;
    const body = init?.body ? JSON.parse(String(init.body)) : {};
    if (path === "/healthz") {
      return json({ status: "ok" });
    }
    if (path.endsWith("/propose")) {
      if (state.pending) {
        return json({ code: "pending_exists", message: "pending" }, 409);
      }
      state.pending = true;
      state.lastSeed = body.seed;
      return json({
        preview_id: `p-${body.seed}`,
        image_png_b64: `png-for-seed-${body.seed}`,
        diagnostics: { alignment: { alpha: 1, beta: 0, fallback: false, clamp_count: 0 },
                       inpainted_pixels: 10, backend_id: "mock" },
      });
    }
    if (path.endsWith("/commit")) {
      if (!state.pending) {
        return json({ code: "no_pending", message: "no preview" }, 409);
      }
      state.pending = false;
      state.steps += 1;
      return json(summary());
    }
    if (path.endsWith("/reject")) {
      if (!state.pending) {
        return json({ code: "no_pending", message: "no preview" }, 409);
      }
      state.pending = false;
      return json(summary());
    }
    if (path.endsWith("/undo")) {
      state.steps -= 1;
      return json(summary());
    }
    if (/\/sessions\/[^/]+$/.test(path)) {
      return json(summary());
    }
    return json({ code: "not_found", message: path }, 404);
  };
  return { fetchImpl, state };
}

const fakeSocketFactory = (events: GatewayEvent[]) =>
  (url: string, onEvent: (ev: GatewayEvent) => void) => {
    for (const ev of events) {
      queueMicrotask(() => onEvent(ev));
    }
    return { close: () => undefined };
  };

function makeController(events: GatewayEvent[] = []) {
  const gw = fakeGateway();
  const client = new GatewayClient("http://gw.test", gw.fetchImpl,
                                   fakeSocketFactory(events));
  return { controller: new AuthorController(client, "sess-1", 64, 64), gw, client };
}

describe("connect_and_sync", () => {
  it("loads the summary and reports step count", async () => {
    const { controller } = makeController();
    expect(await controller.connect()).toBe(true);
    expect(controller.state.summary?.steps).toBe(1);
    expect(controller.state.error).toBeNull();
  });

  it("dead gateway produces an error banner, not a crash", async () => {
    const client = new GatewayClient("http://gw.test", async () => {
      throw new Error("ECONNREFUSED");
    });
    const controller = new AuthorController(client, "sess-1", 64, 64);
    expect(await controller.connect()).toBe(false);
    expect(controller.state.error).toMatch(/unreachable/);
  });

  it("preview_ready events reach the view callback", async () => {
    const events: GatewayEvent[] = [{ type: "preview_ready", payload: { preview_id: "p" } }];
    const { controller } = makeController(events);
    const seen: string[] = [];
    await controller.connect((ev) => seen.push(ev.type));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(seen).toEqual(["preview_ready"]);
  });
});

describe("author_step protocol", () => {
  it("propose -> accept updates the summary", async () => {
    const { controller } = makeController();
    await controller.connect();
    controller.state.seed = 7;
    const preview = await controller.propose();
    expect(preview.image_png_b64).toBe("png-for-seed-7");
    expect(controller.state.pendingPreviewId).toBe("p-7");
    const summary = await controller.accept();
    expect(summary.steps).toBe(2);
    expect(controller.state.pendingPreviewId).toBeNull();
  });

  it("retry issues exactly one reject, then one propose with a new seed", async () => {
    const { controller, client } = makeController();
    await controller.connect();
    controller.state.seed = 3;
    await controller.propose();
    client.requestLog.length = 0;
    await controller.retry();
    const calls = client.requestLog.map((r) => r.path.split("/").pop());
    expect(calls).toEqual(["reject", "propose"]);
    expect(controller.state.seed).toBe(4);
  });

  it("client enforces the single-pending rule locally", async () => {
    const { controller } = makeController();
    await controller.connect();
    await controller.propose();
    await expect(controller.propose()).rejects.toThrow(/pending/);
  });

  it("selection box is clamped and sent on the wire", async () => {
    const gw = fakeGateway();
    const bodies: Array<Record<string, unknown>> = [];
    const spyFetch = async (url: string, init?: RequestInit) => {
      if (init?.body) {
        bodies.push(JSON.parse(String(init.body)));
      }
      return gw.fetchImpl(url, init);
    };
    const client = new GatewayClient("http://gw.test", spyFetch);
    const controller = new AuthorController(client, "sess-1", 64, 64);
    controller.setSelection({ x0: -10, y0: 5, x1: 900, y1: 40 });
    await controller.propose();
    const proposeBody = bodies.find((b) => "pose" in b)!;
    expect(proposeBody.selection_box).toEqual([0, 5, 64, 40]);
  });

  it("gateway errors surface verbatim by code", async () => {
    const { controller, client } = makeController();
    await controller.connect();
    // force a direct commit with no pending preview via the raw client
    try {
      await client.commit("sess-1");
      throw new Error("should have failed");
    } catch (err) {
      expect(err).toBeInstanceOf(GatewayError);
      expect((err as GatewayError).code).toBe("no_pending");
      expect((err as GatewayError).status).toBe(409);
    }
  });

  it("same seed twice produces an identical preview payload", async () => {
    const { controller } = makeController();
    await controller.connect();
    controller.state.seed = 5;
    const first = await controller.propose();
    await controller.reject();
    const second = await controller.propose();
    expect(second.image_png_b64).toBe(first.image_png_b64);
  });
});

describe("trajectory recording", () => {
  it("keyframes export in the CLI schema with interpolation", async () => {
    const { controller } = makeController();
    controller.state.prompt = "hills";
    controller.state.seed = 12;
    controller.recordKeyframe();
    controller.orbitBy(0.5, 0.1);
    controller.recordKeyframe();
    const entries = controller.exportTrajectory(10);
    expect(entries).toHaveLength(11);
    expect(entries[0].prompt).toBe("hills");
    expect(entries.every((e) => e.pose.rotation.length === 3)).toBe(true);
  });

  it("export without keyframes is a disabled action", () => {
    const { controller } = makeController();
    expect(() => controller.exportTrajectory(5)).toThrow(/keyframe/);
  });
});
