/**
 * Canvas pointer trajectory: capture, resampling, and conversion into a
 * DemoTrajectory the service accepts.
 *
 * The sketch stands in for a kinesthetic demonstration, so only the
 * positional path is drawn; the end-effector orientation is held at the
 * handle's grasp orientation and the gripper is closed for the whole
 * sketch (the sketch IS the opening motion).
 */

import type { DemoTrajectoryJson, PoseJson } from "./api.js";
import { screenToWorld, type ScreenMap } from "./mapping.js";

export interface PointerSample {
  x: number; // canvas px
  y: number;
  t: number; // ms since sketch start
}

export class SketchError extends Error {}

export const SAMPLE_DT = 0.05; // s between resampled demonstration samples

/**
 * Resample a raw pointer path at a fixed time step by linear
 * interpolation. Timestamps must be strictly increasing.
 */
export function resamplePointer(
  samples: PointerSample[],
  dtMs: number,
): PointerSample[] {
  if (samples.length < 2) {
    throw new SketchError("sketch needs at least two pointer samples");
  }
  for (let i = 1; i < samples.length; i++) {
    if (samples[i].t <= samples[i - 1].t) {
      throw new SketchError("pointer timestamps must be strictly increasing");
    }
  }
  const out: PointerSample[] = [];
  const t0 = samples[0].t;
  const t1 = samples[samples.length - 1].t;
  let k = 0;
  for (let t = t0; t <= t1 + 1e-9; t += dtMs) {
    while (k + 1 < samples.length - 1 && samples[k + 1].t < t) k++;
    const a = samples[k];
    const b = samples[Math.min(k + 1, samples.length - 1)];
    const s = b.t === a.t ? 0 : (t - a.t) / (b.t - a.t);
    out.push({
      x: a.x + s * (b.x - a.x),
      y: a.y + s * (b.y - a.y),
      t: t - t0,
    });
  }
  return out;
}

/**
 * Map a resampled pointer path into a DemoTrajectory. Every mapped
 * sample must stay inside the published workspace window.
 */
export function canvasToTrajectory(
  samples: PointerSample[],
  map: ScreenMap,
  handlePose: PoseJson,
  dt = SAMPLE_DT,
): DemoTrajectoryJson {
  const resampled = resamplePointer(samples, dt * 1000);
  const half = map.projection.extent / 2;
  const out: DemoTrajectoryJson = { source: "human-UI", samples: [] };
  resampled.forEach((p, i) => {
    if (p.x < 0 || p.x > map.size || p.y < 0 || p.y > map.size) {
      throw new SketchError(
        `sketch sample ${i} leaves the canvas (${p.x.toFixed(0)}, ${p.y.toFixed(0)})`,
      );
    }
    const world = screenToWorld(map, p.x, p.y, handlePose.translation);
    const axes = map.projection.plane === "xz" ? [0, 2] : [0, 1];
    for (let a = 0; a < 2; a++) {
      if (Math.abs(world[axes[a]] - map.projection.center[a]) > half) {
        throw new SketchError(`sketch sample ${i} is out of workspace bounds`);
      }
    }
    out.samples.push({
      t: i * dt,
      ee_pose: { quat_xyzw: [...handlePose.quat_xyzw], translation: world },
      wrench: [0, 0, 0, 0, 0, 0],
      gripper: 0.0,
    });
  });
  return out;
}
