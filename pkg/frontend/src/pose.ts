/**
 * Camera pose math. Matches the engine's conventions: camera-to-world poses,
 * x right / y down / z forward, positive pitch looks down (+y). Rotations are
 * interpolated through quaternions so every emitted matrix is orthonormal.
 */

import type { PoseJson, TrajectoryEntry } from "./types.js";

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // x, y, z, w

export interface OrbitState {
  target: Vec3;
  radius: number;
  yaw: number; // radians, about world y
  pitch: number; // radians, positive looks down
}

const matMul = (a: number[][], b: number[][]): number[][] => {
  const out = [
    [0, 0, 0],
    [0, 0, 0],
    [0, 0, 0],
  ];
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
    }
  }
  return out;
};

export function yawPitchMatrix(yaw: number, pitch: number): number[][] {
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  const ry = [
    [cy, 0, sy],
    [0, 1, 0],
    [-sy, 0, cy],
  ];
  const rx = [
    [1, 0, 0],
    [0, cp, sp],
    [0, -sp, cp],
  ];
  return matMul(ry, rx);
}

export function posePointingAt(yaw: number, pitch: number, position: Vec3): PoseJson {
  return { rotation: yawPitchMatrix(yaw, pitch), translation: [...position] };
}

/** Camera forward axis (third rotation column) in world space. */
export function forwardAxis(pose: PoseJson): Vec3 {
  const r = pose.rotation;
  return [r[0][2], r[1][2], r[2][2]];
}

/** Orbit parameters -> camera-to-world pose looking at the target. */
export function orbitPose(orbit: OrbitState): PoseJson {
  const rotation = yawPitchMatrix(orbit.yaw, orbit.pitch);
  const fwd: Vec3 = [rotation[0][2], rotation[1][2], rotation[2][2]];
  const translation: Vec3 = [
    orbit.target[0] - fwd[0] * orbit.radius,
    orbit.target[1] - fwd[1] * orbit.radius,
    orbit.target[2] - fwd[2] * orbit.radius,
  ];
  return { rotation, translation };
}

export function matToQuat(m: number[][]): Quat {
  const trace = m[0][0] + m[1][1] + m[2][2];
  let x: number, y: number, z: number, w: number;
  if (trace > 0) {
    const s = Math.sqrt(trace + 1) * 2;
    w = s / 4;
    x = (m[2][1] - m[1][2]) / s;
    y = (m[0][2] - m[2][0]) / s;
    z = (m[1][0] - m[0][1]) / s;
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const s = Math.sqrt(1 + m[0][0] - m[1][1] - m[2][2]) * 2;
    w = (m[2][1] - m[1][2]) / s;
    x = s / 4;
    y = (m[0][1] + m[1][0]) / s;
    z = (m[0][2] + m[2][0]) / s;
  } else if (m[1][1] > m[2][2]) {
    const s = Math.sqrt(1 + m[1][1] - m[0][0] - m[2][2]) * 2;
    w = (m[0][2] - m[2][0]) / s;
    x = (m[0][1] + m[1][0]) / s;
    y = s / 4;
    z = (m[1][2] + m[2][1]) / s;
  } else {
    const s = Math.sqrt(1 + m[2][2] - m[0][0] - m[1][1]) * 2;
    w = (m[1][0] - m[0][1]) / s;
    x = (m[0][2] + m[2][0]) / s;
    y = (m[1][2] + m[2][1]) / s;
    z = s / 4;
  }
  return normalizeQuat([x, y, z, w]);
}

export function quatToMat(q: Quat): number[][] {
  const [x, y, z, w] = normalizeQuat(q);
  return [
    [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
    [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
    [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
  ];
}

export function normalizeQuat(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function slerp(a: Quat, b: Quat, t: number): Quat {
  let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
  let bb: Quat = b;
  if (dot < 0) {
    bb = [-b[0], -b[1], -b[2], -b[3]];
    dot = -dot;
  }
  if (dot > 0.9995) {
    // nearly parallel: lerp and renormalize
    return normalizeQuat([
      a[0] + t * (bb[0] - a[0]),
      a[1] + t * (bb[1] - a[1]),
      a[2] + t * (bb[2] - a[2]),
      a[3] + t * (bb[3] - a[3]),
    ]);
  }
  const theta = Math.acos(Math.min(1, dot));
  const sa = Math.sin((1 - t) * theta) / Math.sin(theta);
  const sb = Math.sin(t * theta) / Math.sin(theta);
  return normalizeQuat([
    sa * a[0] + sb * bb[0],
    sa * a[1] + sb * bb[1],
    sa * a[2] + sb * bb[2],
    sa * a[3] + sb * bb[3],
  ]);
}

/**
 * Poses from `a` to `b` inclusive: `count` interpolations means count+1 poses.
 * Rotation slerps, translation lerps.
 */
export function interpolatePoses(a: PoseJson, b: PoseJson, count: number): PoseJson[] {
  if (count < 1) {
    throw new Error("interpolation count must be >= 1");
  }
  const qa = matToQuat(a.rotation);
  const qb = matToQuat(b.rotation);
  const out: PoseJson[] = [];
  for (let i = 0; i <= count; i++) {
    const t = i / count;
    out.push({
      rotation: quatToMat(slerp(qa, qb, t)),
      translation: [0, 1, 2].map(
        (k) => a.translation[k] + t * (b.translation[k] - a.translation[k]),
      ),
    });
  }
  return out;
}

/** Keyframed poses -> the batch-CLI trajectory schema. */
export function buildTrajectory(
  keyframes: PoseJson[],
  interpolations: number,
  prompt: string,
  seedBase: number,
): TrajectoryEntry[] {
  if (keyframes.length === 0) {
    throw new Error("at least one keyframe required");
  }
  const poses: PoseJson[] = [keyframes[0]];
  for (let i = 1; i < keyframes.length; i++) {
    poses.push(...interpolatePoses(keyframes[i - 1], keyframes[i], interpolations).slice(1));
  }
  return poses.map((pose, i) => ({ pose, prompt, seed: seedBase + i }));
}

/** max |R R^T - I| over all entries; 0 for a perfect rotation. */
export function orthonormalityError(rotation: number[][]): number {
  let worst = 0;
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) {
        dot += rotation[i][k] * rotation[j][k];
      }
      worst = Math.max(worst, Math.abs(dot - (i === j ? 1 : 0)));
    }
  }
  return worst;
}
