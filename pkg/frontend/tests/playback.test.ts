import { describe, expect, it } from "vitest";

import type { Frame, FramesPage } from "../src/api.js";
import { FrameStore, PlaybackModel } from "../src/playback.js";

function frame(i: number): Frame {
  return {
    i,
    t: i * 0.01,
    ee_pose: { quat_xyzw: [0, 0, 0, 1], translation: [0, 0, 0] },
    wrench: [0, 0, 0, 0, 0, 0],
    phase: 0,
    blocked: [],
  };
}

function page(from: number, n: number, status = "running"): FramesPage {
  return {
    from,
    next: from + n,
    frames: Array.from({ length: n }, (_, k) => frame(from + k)),
    status,
    error: null,
  };
}

describe("frame store", () => {
  it("accumulates pages and resumes from its own index", () => {
    const store = new FrameStore();
    store.absorb(page(0, 3));
    expect(store.next).toBe(3);
    store.absorb(page(3, 2, "done"));
    expect(store.frames.map((f) => f.i)).toEqual([0, 1, 2, 3, 4]);
    expect(store.terminal).toBe(true);
  });

  it("rejects pages that do not start at the resume index", () => {
    const store = new FrameStore();
    store.absorb(page(0, 3));
    expect(() => store.absorb(page(1, 2))).toThrow(/expected 3/);
  });

  it("tracks failed runs", () => {
    const store = new FrameStore();
    const p = page(0, 1, "failed");
    p.error = "execution failed: timeout";
    store.absorb(p);
    expect(store.terminal).toBe(true);
    expect(store.error).toMatch(/timeout/);
  });
});

describe("playback model", () => {
  function model(): PlaybackModel {
    const store = new FrameStore();
    store.absorb(page(0, 5, "done"));
    return new PlaybackModel(store);
  }

  it("ticks forward only while playing", () => {
    const m = model();
    m.tick();
    expect(m.index).toBe(0);
    m.play();
    m.tick();
    expect(m.index).toBe(1);
  });

  it("pauses at the end of a finished run", () => {
    const m = model();
    m.play();
    for (let i = 0; i < 10; i++) m.tick();
    expect(m.index).toBe(4);
    expect(m.playing).toBe(false);
  });

  it("keeps waiting at the frontier of a live run", () => {
    const store = new FrameStore();
    store.absorb(page(0, 2));
    const m = new PlaybackModel(store);
    m.play();
    for (let i = 0; i < 5; i++) m.tick();
    expect(m.index).toBe(1);
    expect(m.playing).toBe(true);
  });

  it("clamps scrubbing to the frame range", () => {
    const m = model();
    m.scrub(99);
    expect(m.index).toBe(4);
    m.scrub(-3);
    expect(m.index).toBe(0);
  });
});
