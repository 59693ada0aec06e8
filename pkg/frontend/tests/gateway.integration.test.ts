/**
 * End-to-end operator loop against a real gateway process with the mock
 * backend: orbit, draw a selection box, propose the same seed twice (pixel
 * identical), accept once, download a trajectory, and run it through the
 * batch CLI.
 */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GatewayClient } from "../src/api.js";
import { AuthorController } from "../src/controller.js";

const execFileAsync = promisify(execFile);
const REPO_ROOT = join(__dirname, "..", "..");

const freePort = (): Promise<number> =>
  new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address && typeof address === "object") {
        const port = address.port;
        srv.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });

const FRAME = 48;

// node 20 has no global WebSocket; the event stream is unit-tested with a
// fake socket, so the live run uses a no-op subscription
const makeClient = (url: string) =>
  new GatewayClient(url, (u, init) => fetch(u, init), () => ({ close: () => undefined }));

const sessionConfig = {
  intrinsics: { fx: 60.0, fy: 60.0, cx: FRAME / 2, cy: FRAME / 2, width: FRAME, height: FRAME },
  backend: {
    kind: "mock",
    world: { seed: 13, terrain_amplitude: 0.45 },
    depth_perturb: { alpha: 2.0, beta: 0.01 },
  },
  align: { blur_sigma: 3.0, dilation_radius: 3 },
  envmap: { enabled: false, width: 512, height: 256 },
};

describe("operator loop against a live gateway", () => {
  let server: ChildProcess;
  let baseUrl: string;
  let dataDir: string;

  beforeAll(async () => {
    const port = await freePort();
    baseUrl = `http://127.0.0.1:${port}`;
    dataDir = mkdtempSync(join(tmpdir(), "scenefuse-ui-"));
    server = spawn(
      "python3",
      ["-m", "scenefuse.cli", "serve", "--port", String(port),
       "--backend", "mock", "--data-dir", join(dataDir, "gw")],
      { cwd: REPO_ROOT, stdio: "ignore" },
    );
    const client = makeClient(baseUrl);
    const deadline = Date.now() + 30_000;
    while (Date.now() < deadline) {
      if (await client.health()) {
        return;
      }
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
    throw new Error("gateway did not come up");
  }, 40_000);

  afterAll(() => {
    server?.kill("SIGTERM");
  });

  it("orbit, box, seeded propose x2 (identical), accept, trajectory runs", async () => {
    const client = makeClient(baseUrl);

    // session anchored at the controller's initial orbit pose
    const bootstrap = new AuthorController(client, "unused", FRAME, FRAME);
    bootstrap.state.orbit = { target: [0, 2, 5], radius: 5, yaw: 0, pitch: 0.5 };
    const created = await client.createSession(
      sessionConfig, { prompt: "terrain", seed: 5 }, bootstrap.pose);
    expect(created.summary.steps).toBe(1);

    const controller = new AuthorController(client, created.id, FRAME, FRAME);
    controller.state.orbit = { target: [0, 2, 5], radius: 5, yaw: 0, pitch: 0.5 };
    controller.state.prompt = "terrain";
    expect(await controller.connect()).toBe(true);
    controller.recordKeyframe();

    // orbit to a new viewpoint; the scene view re-renders
    controller.orbitBy(0.26, 0.0);
    const view = await client.render(created.id, controller.pose);
    expect(view.png.byteLength).toBeGreaterThan(0);
    expect(view.coverage).toBeGreaterThan(0);
    controller.recordKeyframe();

    // draw a selection box over most of the frame
    controller.setSelection({ x0: 2, y0: 2, x1: FRAME - 2, y1: FRAME - 2 });

    // propose with a fixed seed twice -> pixel-identical previews
    controller.state.seed = 42;
    const first = await controller.propose();
    await controller.reject();
    const second = await controller.propose();
    expect(second.image_png_b64).toBe(first.image_png_b64);

    // accept once
    const summary = await controller.accept();
    expect(summary.steps).toBe(2);

    // download a trajectory and execute it through the batch CLI
    const entries = controller.exportTrajectory(3);
    expect(entries.length).toBe(4);
    const trajectoryPath = join(dataDir, "trajectory.json");
    writeFileSync(trajectoryPath, JSON.stringify(entries, null, 2));

    const outDir = join(dataDir, "run");
    await execFileAsync(
      "python3",
      ["-m", "scenefuse.cli", "run",
       "--trajectory", trajectoryPath, "--out", outDir,
       "--width", String(FRAME), "--height", String(FRAME), "--focal", "60",
       "--world-seed", "13", "--no-envmap"],
      { cwd: REPO_ROOT },
    ); // non-zero exit rejects the promise

    // the protocol ordering seen by the gateway: reject exactly once between
    // the two proposes
    const ops = client.requestLog
      .map((r) => r.path.split("/").pop())
      .filter((p) => p === "propose" || p === "reject" || p === "commit");
    expect(ops).toEqual(["propose", "reject", "propose", "commit"]);
  }, 120_000);
});
