/**
 * Headless round trip against the real service (acceptance criterion:
 * UI round trip). Spawns `mechanism-lfd serve`, draws an L-shaped
 * sketch through the same mapping/resampling code the canvas uses,
 * submits it, checks k=2 segmentation, runs augmentation, polls the
 * frame log to a terminal state, and verifies that every value the UI
 * would display equals the API value exactly.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Client } from "../src/api.js";
import type { SceneResponse } from "../src/api.js";
import { worldToScreen, type ScreenMap } from "../src/mapping.js";
import { canvasToTrajectory, type PointerSample } from "../src/sketch.js";
import { FrameStore, pollRun } from "../src/playback.js";
import {
  frameReadout,
  hypothesisRows,
  segmentationRows,
} from "../src/view.js";

const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;
let server: ChildProcess;

async function waitForServer(timeoutMs = 30000): Promise<void> {
  const t0 = Date.now();
  for (;;) {
    try {
      const res = await fetch(`${BASE}/sessions`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ fixture: "lock1" }),
      });
      if (res.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() - t0 > timeoutMs) throw new Error("service did not start");
    await new Promise((r) => setTimeout(r, 250));
  }
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-c", `from mechanism_lfd.server import serve_api; serve_api(port=${PORT})`],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 40000);

afterAll(() => {
  server?.kill();
});

/**
 * L-shaped pointer path starting at the handle: lift 25 px (0.031 m of
 * workspace up the sketch plane), then 30 px to the right.
 */
function lSketch(map: ScreenMap, scene: SceneResponse): PointerSample[] {
  const start = worldToScreen(map, scene.handle_pose.translation);
  const out: PointerSample[] = [];
  for (let i = 0; i <= 10; i++) {
    out.push({ x: start.x, y: start.y - 2.0 * i, t: i * 100 });
  }
  for (let i = 1; i <= 10; i++) {
    out.push({ x: start.x + 3.0 * i, y: start.y - 20.0, t: 1000 + i * 100 });
  }
  return out;
}

describe("UI round trip", () => {
  it("L sketch -> k=2 -> augmentation -> terminal frames, values exact", async () => {
    const client = new Client(BASE);
    const { id: sid } = await client.createSession("lock1");
    const scene = await client.scene(sid);
    expect(scene.projection.plane).toBe("xz");
    const map: ScreenMap = { size: 480, projection: scene.projection };

    // sketch and submit
    const traj = canvasToTrajectory(lSketch(map, scene), map, scene.handle_pose);
    const summary = await client.postDemonstration(sid, traj);
    expect(summary.k).toBe(2);

    // the rendered segment rows are the API values, untransformed
    const rows = segmentationRows(summary);
    expect(rows.length).toBe(2);
    for (let i = 0; i < rows.length; i++) {
      expect(rows[i].index).toBe(summary.segments[i].index);
      expect(rows[i].start).toEqual(summary.segments[i].start);
      expect(rows[i].mHat).toEqual(summary.segments[i].m_hat);
      expect(rows[i].span).toEqual(summary.segments[i].span);
    }
    // first stroke rises in z, second goes along +x
    expect(rows[0].mHat[2]).toBeGreaterThan(0.9);
    expect(rows[1].mHat[0]).toBeGreaterThan(0.9);

    // augmentation to a terminal frame sequence
    const { run_id } = await client.augment(sid);
    const store = await pollRun(client, sid, run_id, new FrameStore(), 50);
    expect(store.terminal).toBe(true);
    expect(store.status).toBe("done");
    expect(store.frames.length).toBeGreaterThan(0);

    // the frame log is complete and ordered; re-fetching any page gives
    // exactly what the store displays
    const again = await client.frames(sid, run_id, 0);
    expect(again.status).toBe("done");
    expect(again.frames).toEqual(store.frames);
    for (let i = 0; i < store.frames.length; i++) {
      expect(store.frames[i].i).toBe(i);
    }

    // frame readout view equals the API frame values exactly
    const last = store.frames[store.frames.length - 1];
    const view = frameReadout(last);
    expect(view.t).toBe(last.t);
    expect(view.position).toEqual(last.ee_pose.translation);
    expect(view.wrench).toEqual(last.wrench);
    expect(view.phase).toBe(last.phase);
    expect(view.blocked).toEqual(last.blocked);

    // verdict panel rows equal the API hypothesis records exactly,
    // in Algorithm-1 order
    const res = await client.hypotheses(sid, run_id);
    expect(res.status).toBe("done");
    const verdicts = hypothesisRows(res.hypotheses);
    expect(verdicts.length).toBe(res.hypotheses.length);
    for (let i = 0; i < verdicts.length; i++) {
      expect(verdicts[i].segment).toBe(res.hypotheses[i].segment);
      expect(verdicts[i].label).toBe(res.hypotheses[i].label);
      expect(verdicts[i].candidate).toEqual(res.hypotheses[i].candidate);
      expect(verdicts[i].displacement).toBe(res.hypotheses[i].displacement);
      expect(verdicts[i].verdict).toBe(res.hypotheses[i].verdict);
    }
    expect(verdicts[0].segment).toBe(0);
    expect(verdicts[0].label).toBe("next");
  }, 120000);

  it("surfaces a degenerate sketch as a server validation error", async () => {
    const client = new Client(BASE);
    const { id: sid } = await client.createSession("lock1");
    const scene = await client.scene(sid);
    const map: ScreenMap = { size: 480, projection: scene.projection };
    const start = worldToScreen(map, scene.handle_pose.translation);
    // a sub-5mm scribble: 2 px of travel is ~2.5 mm of workspace
    const traj = canvasToTrajectory(
      [
        { x: start.x, y: start.y, t: 0 },
        { x: start.x + 1, y: start.y, t: 100 },
        { x: start.x + 2, y: start.y, t: 200 },
      ],
      map,
      scene.handle_pose,
    );
    await expect(client.postDemonstration(sid, traj)).rejects.toMatchObject({
      status: 422,
      detail: { error: "DegenerateTrajectory" },
    });
  }, 30000);
});
