/**
 * Authoring controller: owns the view state and drives the propose /
 * accept / retry / reject protocol against the gateway. One in-flight
 * generation at a time (the gateway's pending-preview rule is also enforced
 * client-side); Retry is exactly reject-then-propose with a fresh seed.
 */

import { GatewayClient } from "./api.js";
import { orbitPose, buildTrajectory, type OrbitState } from "./pose.js";
import { clampBox, boxToWire } from "./selection.js";
import type {
  ConditionPayload,
  GatewayEvent,
  PoseJson,
  ProposeResponse,
  SelectionBox,
  SessionSummary,
  TrajectoryEntry,
} from "./types.js";

export interface ViewState {
  orbit: OrbitState;
  frameWidth: number;
  frameHeight: number;
  prompt: string;
  seed: number;
  selection: SelectionBox | null;
  conditions: ConditionPayload[];
  pendingPreviewId: string | null;
  lastPreview: ProposeResponse | null;
  summary: SessionSummary | null;
  keyframes: PoseJson[];
  error: string | null;
}

export class AuthorController {
  readonly client: GatewayClient;
  readonly sessionId: string;
  readonly state: ViewState;
  private socket: { close(): void } | null = null;
  private busy = false;

  constructor(client: GatewayClient, sessionId: string,
              frameWidth: number, frameHeight: number) {
    this.client = client;
    this.sessionId = sessionId;
    this.state = {
      orbit: { target: [0, 1.5, 6], radius: 6, yaw: 0, pitch: 0.45 },
      frameWidth,
      frameHeight,
      prompt: "",
      seed: 0,
      selection: null,
      conditions: [],
      pendingPreviewId: null,
      lastPreview: null,
      summary: null,
      keyframes: [],
      error: null,
    };
  }

  get pose(): PoseJson {
    return orbitPose(this.state.orbit);
  }

  /** Fetch the summary and subscribe to events; sets an error banner instead
   * of throwing when the gateway is down. */
  async connect(onEvent?: (ev: GatewayEvent) => void): Promise<boolean> {
    try {
      this.state.summary = await this.client.summary(this.sessionId);
      this.state.error = null;
    } catch (err) {
      this.state.error = `gateway unreachable: ${String(err)}`;
      return false;
    }
    this.socket = this.client.subscribe(
      this.sessionId,
      (ev) => onEvent?.(ev),
      () => {
        this.state.error = "event stream lost";
      },
    );
    return true;
  }

  disconnect(): void {
    this.socket?.close();
    this.socket = null;
  }

  orbitBy(dYaw: number, dPitch: number): void {
    this.state.orbit.yaw += dYaw;
    this.state.orbit.pitch = Math.max(-1.4, Math.min(1.4, this.state.orbit.pitch + dPitch));
  }

  setSelection(box: SelectionBox | null): void {
    this.state.selection = box
      ? clampBox(box, this.state.frameWidth, this.state.frameHeight)
      : null;
  }

  async propose(): Promise<ProposeResponse> {
    if (this.busy || this.state.pendingPreviewId !== null) {
      throw new Error("a preview is already pending; accept, retry, or reject it");
    }
    this.busy = true;
    try {
      const preview = await this.client.propose(this.sessionId, {
        pose: this.pose,
        prompt: this.state.prompt,
        seed: this.state.seed,
        selection_box: this.state.selection ? boxToWire(this.state.selection) : undefined,
        conditions: this.state.conditions.length ? this.state.conditions : undefined,
      });
      this.state.pendingPreviewId = preview.preview_id;
      this.state.lastPreview = preview;
      return preview;
    } finally {
      this.busy = false;
    }
  }

  async accept(): Promise<SessionSummary> {
    if (this.state.pendingPreviewId === null) {
      throw new Error("nothing to accept");
    }
    const summary = await this.client.commit(this.sessionId);
    this.state.pendingPreviewId = null;
    this.state.summary = summary;
    return summary;
  }

  async reject(): Promise<void> {
    if (this.state.pendingPreviewId === null) {
      throw new Error("nothing to reject");
    }
    await this.client.reject(this.sessionId);
    this.state.pendingPreviewId = null;
  }

  /** Reject the pending preview and re-propose with a fresh seed. */
  async retry(newSeed?: number): Promise<ProposeResponse> {
    await this.reject();
    this.state.seed = newSeed ?? this.state.seed + 1;
    return this.propose();
  }

  async undo(): Promise<SessionSummary> {
    const summary = await this.client.undo(this.sessionId);
    this.state.summary = summary;
    return summary;
  }

  recordKeyframe(): void {
    this.state.keyframes.push(this.pose);
  }

  /** Keyframed poses -> the batch-CLI trajectory schema (download payload). */
  exportTrajectory(interpolations: number): TrajectoryEntry[] {
    if (this.state.keyframes.length === 0) {
      throw new Error("place at least one keyframe first");
    }
    return buildTrajectory(
      this.state.keyframes,
      interpolations,
      this.state.prompt,
      this.state.seed,
    );
  }
}
