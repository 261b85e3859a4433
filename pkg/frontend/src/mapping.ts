/**
 * Screen <-> workspace mapping from the session's published projection.
 *
 * The server names the sketch plane per fixture ("xz" for locks, "xy"
 * for drawers) along with the workspace point under the canvas center
 * and the workspace extent across the canvas. Everything here is a pure
 * linear map, so round trips are exact to floating-point precision
 * (well inside the 1 px requirement).
 */

import type { Projection } from "./api.js";

export interface ScreenMap {
  /** canvas size in px (square) */
  size: number;
  projection: Projection;
}

const PLANE_AXES: Record<string, [number, number]> = {
  xz: [0, 2],
  xy: [0, 1],
};

export function planeAxes(plane: string): [number, number] {
  const axes = PLANE_AXES[plane];
  if (!axes) throw new Error(`unknown sketch plane ${plane}`);
  return axes;
}

/** Workspace point (3-vector) to canvas px; up in the plane is up on screen. */
export function worldToScreen(
  map: ScreenMap,
  world: number[],
): { x: number; y: number } {
  const [i, j] = planeAxes(map.projection.plane);
  const scale = map.size / map.projection.extent;
  return {
    x: map.size / 2 + (world[i] - map.projection.center[0]) * scale,
    y: map.size / 2 - (world[j] - map.projection.center[1]) * scale,
  };
}

/**
 * Canvas px to a workspace 3-vector. The out-of-plane coordinate is not
 * sketchable and is taken from `reference` (normally the handle pose).
 */
export function screenToWorld(
  map: ScreenMap,
  x: number,
  y: number,
  reference: number[],
): number[] {
  const [i, j] = planeAxes(map.projection.plane);
  const scale = map.size / map.projection.extent;
  const world = [...reference];
  world[i] = map.projection.center[0] + (x - map.size / 2) / scale;
  world[j] = map.projection.center[1] - (y - map.size / 2) / scale;
  return world;
}
