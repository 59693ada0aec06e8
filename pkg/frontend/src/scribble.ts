/**
 * Scribble layer: strokes rasterized client-side to frame resolution so the
 * backend receives pixel-aligned condition images. The raster lives in plain
 * buffers; PNG encoding is injected (canvas in the browser, anything in
 * tests).
 */

import type { ConditionPayload } from "./types.js";

export interface Stroke {
  points: Array<{ x: number; y: number }>;
  radius: number;
  color: [number, number, number]; // 0-255
}

export type PngEncoder = (
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
) => Promise<string>; // base64 PNG

export class ScribbleLayer {
  readonly width: number;
  readonly height: number;
  /** RGBA, black background; strokes paint opaque color. */
  readonly rgba: Uint8ClampedArray;
  private painted = 0;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.rgba = new Uint8ClampedArray(width * height * 4);
    for (let i = 3; i < this.rgba.length; i += 4) {
      this.rgba[i] = 255;
    }
  }

  get paintedPixels(): number {
    return this.painted;
  }

  get isEmpty(): boolean {
    return this.painted === 0;
  }

  private paintDisc(cx: number, cy: number, radius: number, color: [number, number, number]) {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x + 0.5 - cx;
        const dy = y + 0.5 - cy;
        if (dx * dx + dy * dy > r2) {
          continue;
        }
        const i = (y * this.width + x) * 4;
        if (this.rgba[i] === 0 && this.rgba[i + 1] === 0 && this.rgba[i + 2] === 0) {
          this.painted += 1;
        }
        this.rgba[i] = color[0];
        this.rgba[i + 1] = color[1];
        this.rgba[i + 2] = color[2];
      }
    }
  }

  addStroke(stroke: Stroke): void {
    const pts = stroke.points;
    if (pts.length === 0) {
      return;
    }
    this.paintDisc(pts[0].x, pts[0].y, stroke.radius, stroke.color);
    for (let i = 1; i < pts.length; i++) {
      const a = pts[i - 1];
      const b = pts[i];
      const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.paintDisc(
          a.x + t * (b.x - a.x),
          a.y + t * (b.y - a.y),
          stroke.radius,
          stroke.color,
        );
      }
    }
  }

  clear(): void {
    this.rgba.fill(0);
    for (let i = 3; i < this.rgba.length; i += 4) {
      this.rgba[i] = 255;
    }
    this.painted = 0;
  }

  async toCondition(encode: PngEncoder): Promise<ConditionPayload> {
    const image_png = await encode(this.rgba, this.width, this.height);
    if (!image_png) {
      throw new Error("PNG encoder returned an empty payload");
    }
    return { kind: "scribble", image_png };
  }
}
