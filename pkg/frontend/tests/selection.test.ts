import { describe, expect, it } from "vitest";

import { boxFromDrag, boxToWire, clampBox } from "../src/selection.js";

describe("selection box", () => {
  it("normalizes drag corners in any direction", () => {
    expect(boxFromDrag(30, 40, 10, 20)).toEqual({ x0: 10, y0: 20, x1: 30, y1: 40 });
  });

  it("clamps to frame bounds and rounds to pixels", () => {
    const box = clampBox({ x0: -5.4, y0: 3.6, x1: 900, y1: 47.2 }, 64, 48);
    expect(box).toEqual({ x0: 0, y0: 4, x1: 64, y1: 47 });
  });

  it("collapses degenerate boxes to null", () => {
    expect(clampBox({ x0: 10, y0: 10, x1: 10.2, y1: 30 }, 64, 64)).toBeNull();
    expect(clampBox({ x0: 70, y0: 10, x1: 90, y1: 30 }, 64, 64)).toBeNull();
  });

  it("wire form is x0,y0,x1,y1", () => {
    expect(boxToWire({ x0: 1, y0: 2, x1: 3, y1: 4 })).toEqual([1, 2, 3, 4]);
  });
});
