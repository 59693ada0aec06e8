/** Shared wire types for the gateway protocol. */

export interface PoseJson {
  rotation: number[][]; // 3x3 row-major, camera-to-world
  translation: number[]; // 3-vector, meters
}

export interface SelectionBox {
  x0: number;
  y0: number;
  x1: number; // exclusive
  y1: number; // exclusive
}

export type ConditionKind =
  | "scribble"
  | "depth"
  | "segmentation"
  | "canny"
  | "hough"
  | "hed";

export interface ConditionPayload {
  kind: ConditionKind;
  image_png: string; // base64 PNG
}

export interface MeshStats {
  vertex_count: number;
  face_count: number;
  bbox_min: number[];
  bbox_max: number[];
  anomaly_count: number;
}

export interface SessionSummary {
  steps: number;
  pending: boolean;
  mesh: MeshStats;
  envmap: { enabled: boolean; valid_texels: number };
  state_hash: string;
}

export interface AlignmentDiagnostics {
  alpha: number;
  beta: number;
  fallback: boolean;
  clamp_count: number;
}

export interface ProposeResponse {
  preview_id: string;
  image_png_b64: string;
  diagnostics: {
    alignment: AlignmentDiagnostics;
    inpainted_pixels: number;
    backend_id: string;
  };
}

export interface GatewayEvent {
  type: "progress" | "preview_ready" | "committed";
  payload: Record<string, unknown>;
}

export interface TrajectoryEntry {
  pose: PoseJson;
  prompt: string;
  seed: number;
  selection_box?: [number, number, number, number];
}
