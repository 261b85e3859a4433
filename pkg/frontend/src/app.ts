/**
 * DOM wiring for the demo studio.
 *
 * Left: a square canvas showing the sketch plane. Draw the opening path
 * with the pointer, submit it, and the returned segments are rendered as
 * colored strokes with motion-direction arrows. Right: pipeline buttons
 * (augment, execute), the hypothesis-verdict panel, and the playback
 * controls. All numbers shown come straight from API payloads.
 */

import { ApiError, Client } from "./api.js";
import type { SceneResponse, SegmentationSummary } from "./api.js";
import { worldToScreen, type ScreenMap } from "./mapping.js";
import { canvasToTrajectory, SketchError, type PointerSample } from "./sketch.js";
import { FrameStore, PlaybackModel, pollRun } from "./playback.js";
import {
  frameReadout,
  hypothesisRows,
  phaseSwitchTimes,
  segmentationRows,
} from "./view.js";

const SEGMENT_COLORS = ["#d33", "#36b", "#2a2", "#a3a", "#b82", "#288"];
const POLL_MS = 100; // 10 Hz

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  client = new Client(
    (document.querySelector("meta[name=api-base]") as HTMLMetaElement)
      ?.content ?? "http://127.0.0.1:8080",
  );
  canvas = el<HTMLCanvasElement>("sketch");
  ctx = this.canvas.getContext("2d")!;
  banner = el<HTMLDivElement>("banner");
  verdicts = el<HTMLTableSectionElement>("verdicts");
  readout = el<HTMLPreElement>("readout");
  scrub = el<HTMLInputElement>("scrub");

  sid = "";
  scene: SceneResponse | null = null;
  map: ScreenMap | null = null;
  pointer: PointerSample[] = [];
  sketching = false;
  summary: SegmentationSummary | null = null;
  playback: PlaybackModel | null = null;

  constructor() {
    el<HTMLButtonElement>("new-session").onclick = () => this.newSession();
    el<HTMLButtonElement>("clear").onclick = () => {
      this.pointer = [];
      this.summary = null;
      this.redraw();
    };
    el<HTMLButtonElement>("submit").onclick = () => this.submit();
    el<HTMLButtonElement>("augment").onclick = () => this.augment();
    el<HTMLButtonElement>("execute").onclick = () => this.execute();
    el<HTMLButtonElement>("play").onclick = () => this.playback?.play();
    el<HTMLButtonElement>("pause").onclick = () => this.playback?.pause();
    this.scrub.oninput = () => {
      this.playback?.pause();
      this.playback?.scrub(Number(this.scrub.value));
      this.redraw();
    };
    this.canvas.onpointerdown = (e) => {
      this.sketching = true;
      this.pointer = [];
      this.addPoint(e);
    };
    this.canvas.onpointermove = (e) => {
      if (this.sketching) this.addPoint(e);
    };
    this.canvas.onpointerup = () => {
      this.sketching = false;
    };
    setInterval(() => {
      if (this.playback?.playing) {
        this.playback.tick();
        this.scrub.value = String(this.playback.index);
        this.redraw();
      }
    }, POLL_MS);
  }

  showError(e: unknown): void {
    this.banner.textContent =
      e instanceof ApiError
        ? `server: ${JSON.stringify(e.detail)}`
        : e instanceof SketchError
          ? `sketch: ${e.message}`
          : String(e);
    this.banner.hidden = false;
  }

  clearError(): void {
    this.banner.hidden = true;
  }

  addPoint(e: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    this.pointer.push({
      x: ((e.clientX - rect.left) * this.canvas.width) / rect.width,
      y: ((e.clientY - rect.top) * this.canvas.height) / rect.height,
      t: performance.now(),
    });
    this.redraw();
  }

  async newSession(): Promise<void> {
    this.clearError();
    try {
      const fixture = el<HTMLSelectElement>("fixture").value;
      const { id } = await this.client.createSession(fixture);
      this.sid = id;
      this.scene = await this.client.scene(id);
      this.map = { size: this.canvas.width, projection: this.scene.projection };
      this.pointer = [];
      this.summary = null;
      this.playback = null;
      el<HTMLSpanElement>("session-id").textContent = id;
      this.redraw();
    } catch (e) {
      this.showError(e);
    }
  }

  async submit(): Promise<void> {
    if (!this.scene || !this.map) return;
    this.clearError();
    try {
      const traj = canvasToTrajectory(
        this.pointer,
        this.map,
        this.scene.handle_pose,
      );
      this.summary = await this.client.postDemonstration(this.sid, traj);
      this.redraw();
    } catch (e) {
      this.showError(e);
    }
  }

  async augment(): Promise<void> {
    this.clearError();
    try {
      const { run_id } = await this.client.augment(this.sid);
      const store = new FrameStore();
      this.attachPlayback(store);
      const poll = pollRun(this.client, this.sid, run_id, store, POLL_MS, () =>
        this.redraw(),
      );
      const refresh = setInterval(async () => {
        const res = await this.client.hypotheses(this.sid, run_id);
        this.renderVerdicts(hypothesisRows(res.hypotheses));
        if (res.status !== "running") clearInterval(refresh);
      }, POLL_MS);
      await poll;
    } catch (e) {
      this.showError(e);
    }
  }

  async execute(): Promise<void> {
    this.clearError();
    try {
      const { run_id } = await this.client.execute(this.sid);
      const store = new FrameStore();
      this.attachPlayback(store);
      await pollRun(this.client, this.sid, run_id, store, POLL_MS, () =>
        this.redraw(),
      );
      if (store.error) this.showError(store.error);
    } catch (e) {
      this.showError(e);
    }
  }

  attachPlayback(store: FrameStore): void {
    this.playback = new PlaybackModel(store);
    this.playback.play();
  }

  renderVerdicts(rows: ReturnType<typeof hypothesisRows>): void {
    this.verdicts.innerHTML = "";
    for (const r of rows) {
      const tr = document.createElement("tr");
      tr.innerHTML =
        `<td>${r.segment}</td><td>${r.label}</td>` +
        `<td>[${r.candidate.join(", ")}]</td>` +
        `<td>${r.displacement}</td><td class="${r.verdict}">${r.verdict}</td>`;
      this.verdicts.appendChild(tr);
    }
  }

  arrow(x: number, y: number, dx: number, dy: number, color: string): void {
    const c = this.ctx;
    const n = Math.hypot(dx, dy);
    if (n < 1e-9) return;
    const ux = dx / n;
    const uy = dy / n;
    c.strokeStyle = color;
    c.beginPath();
    c.moveTo(x, y);
    c.lineTo(x + dx, y + dy);
    c.lineTo(x + dx - 8 * ux + 4 * uy, y + dy - 8 * uy - 4 * ux);
    c.moveTo(x + dx, y + dy);
    c.lineTo(x + dx - 8 * ux - 4 * uy, y + dy - 8 * uy + 4 * ux);
    c.stroke();
  }

  redraw(): void {
    const c = this.ctx;
    c.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (!this.scene || !this.map) return;
    // handle marker
    const handle = worldToScreen(this.map, this.scene.handle_pose.translation);
    c.fillStyle = "#777";
    c.fillRect(handle.x - 6, handle.y - 6, 12, 12);
    // raw sketch
    c.strokeStyle = "#bbb";
    c.beginPath();
    this.pointer.forEach((p, i) =>
      i === 0 ? c.moveTo(p.x, p.y) : c.lineTo(p.x, p.y),
    );
    c.stroke();
    // segments with motion-direction arrows
    if (this.summary) {
      for (const row of segmentationRows(this.summary)) {
        const color = SEGMENT_COLORS[row.index % SEGMENT_COLORS.length];
        const start = worldToScreen(this.map, row.start);
        const tip = worldToScreen(
          this.map,
          row.start.map((v, k) => v + 0.05 * row.mHat[k]),
        );
        c.lineWidth = 2;
        this.arrow(start.x, start.y, tip.x - start.x, tip.y - start.y, color);
        c.lineWidth = 1;
      }
    }
    // playback: end-effector dot plus wrench arrow
    const frame = this.playback?.frame;
    if (frame) {
      const view = frameReadout(frame);
      const p = worldToScreen(this.map, view.position);
      c.fillStyle = "#06c";
      c.beginPath();
      c.arc(p.x, p.y, 5, 0, 2 * Math.PI);
      c.fill();
      this.arrow(p.x, p.y, view.wrench[0] * 4, -view.wrench[2] * 4, "#c60");
      this.readout.textContent = JSON.stringify(view, null, 1);
      this.scrub.max = String(this.playback!.store.frames.length - 1);
      el<HTMLSpanElement>("switches").textContent = phaseSwitchTimes(
        this.playback!.store.frames,
      )
        .map((t) => t.toFixed(2))
        .join(", ");
    }
  }
}

new App();
