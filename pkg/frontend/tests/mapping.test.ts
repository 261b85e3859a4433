import { describe, expect, it } from "vitest";

import { planeAxes, screenToWorld, worldToScreen } from "../src/mapping.js";
import type { ScreenMap } from "../src/mapping.js";

const XZ: ScreenMap = {
  size: 480,
  projection: { plane: "xz", center: [0.04, 0.0], extent: 0.6 },
};
const XY: ScreenMap = {
  size: 480,
  projection: { plane: "xy", center: [0.2, -0.1], extent: 0.6 },
};

describe("plane axes", () => {
  it("locks sketch in x-z, drawers in x-y", () => {
    expect(planeAxes("xz")).toEqual([0, 2]);
    expect(planeAxes("xy")).toEqual([0, 1]);
  });

  it("rejects unknown planes", () => {
    expect(() => planeAxes("yz")).toThrow(/unknown sketch plane/);
  });
});

describe("screen <-> workspace round trip", () => {
  it("center of the canvas is the published center", () => {
    const p = worldToScreen(XZ, [0.04, 0.7, 0.0]);
    expect(p.x).toBeCloseTo(240, 9);
    expect(p.y).toBeCloseTo(240, 9);
  });

  it("up in the plane is up on screen", () => {
    const p = worldToScreen(XZ, [0.04, 0.0, 0.1]);
    expect(p.y).toBeLessThan(240);
  });

  it("round-trips well within 1 px", () => {
    for (const map of [XZ, XY]) {
      for (let i = 0; i < 100; i++) {
        const x = (i * 37) % 480;
        const y = (i * 53) % 480;
        const world = screenToWorld(map, x, y, [0.04, 0.7, 0.02]);
        const back = worldToScreen(map, world);
        expect(Math.abs(back.x - x)).toBeLessThan(1e-9);
        expect(Math.abs(back.y - y)).toBeLessThan(1e-9);
      }
    }
  });

  it("keeps the out-of-plane coordinate from the reference", () => {
    expect(screenToWorld(XZ, 10, 10, [0, 0.7, 0])[1]).toBe(0.7);
    expect(screenToWorld(XY, 10, 10, [0, 0, 0.02])[2]).toBe(0.02);
  });
});
