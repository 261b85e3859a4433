/**
 * Run playback: paged frame polling with disconnect-safe resume, plus a
 * play/pause/scrub model over the accumulated frames.
 *
 * All state is server-authoritative: the store only ever appends pages
 * the server hands out, starting from its own `next` index, so a client
 * that reconnects mid-run picks up exactly where it left off.
 */

import type { Client, Frame, FramesPage } from "./api.js";

export class FrameStore {
  frames: Frame[] = [];
  status = "running";
  error: string | null = null;

  get next(): number {
    return this.frames.length;
  }

  get terminal(): boolean {
    return this.status !== "running";
  }

  /** Append one page; it must start exactly at our resume index. */
  absorb(page: FramesPage): void {
    if (page.from !== this.next) {
      throw new Error(
        `page starts at ${page.from}, expected ${this.next}; ` +
          `re-request with from=${this.next}`,
      );
    }
    this.frames.push(...page.frames);
    this.status = page.status;
    this.error = page.error;
  }
}

/** Poll a run to completion at the given cadence (default 10 Hz). */
export async function pollRun(
  client: Client,
  sid: string,
  rid: string,
  store: FrameStore,
  intervalMs = 100,
  onPage?: (store: FrameStore) => void,
): Promise<FrameStore> {
  for (;;) {
    const page = await client.frames(sid, rid, store.next);
    store.absorb(page);
    if (onPage) onPage(store);
    if (store.terminal) return store;
    await new Promise((r) => setTimeout(r, intervalMs));
  }
}

export class PlaybackModel {
  index = 0;
  playing = false;

  constructor(public store: FrameStore) {}

  get frame(): Frame | undefined {
    return this.store.frames[this.index];
  }

  play(): void {
    this.playing = true;
  }

  pause(): void {
    this.playing = false;
  }

  scrub(i: number): void {
    this.index = Math.max(0, Math.min(i, this.store.frames.length - 1));
  }

  /** Advance one frame while playing; pauses at the end of a finished run. */
  tick(): void {
    if (!this.playing) return;
    if (this.index + 1 < this.store.frames.length) {
      this.index += 1;
    } else if (this.store.terminal) {
      this.playing = false;
    }
  }
}
