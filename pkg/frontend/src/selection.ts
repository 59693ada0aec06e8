/** Selection-box helpers: normalize drag corners and clamp to frame bounds. */

import type { SelectionBox } from "./types.js";

export function boxFromDrag(
  ax: number,
  ay: number,
  bx: number,
  by: number,
): SelectionBox {
  return {
    x0: Math.min(ax, bx),
    y0: Math.min(ay, by),
    x1: Math.max(ax, bx),
    y1: Math.max(ay, by),
  };
}

/**
 * Clamp into the frame and round to integer pixel edges; degenerate boxes
 * collapse to null (no restriction).
 */
export function clampBox(
  box: SelectionBox,
  width: number,
  height: number,
): SelectionBox | null {
  const x0 = Math.max(0, Math.min(width, Math.round(box.x0)));
  const y0 = Math.max(0, Math.min(height, Math.round(box.y0)));
  const x1 = Math.max(0, Math.min(width, Math.round(box.x1)));
  const y1 = Math.max(0, Math.min(height, Math.round(box.y1)));
  if (x1 - x0 < 1 || y1 - y0 < 1) {
    return null;
  }
  return { x0, y0, x1, y1 };
}

export function boxToWire(box: SelectionBox): [number, number, number, number] {
  return [box.x0, box.y0, box.x1, box.y1];
}
