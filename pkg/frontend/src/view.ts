/**
 * View models: the exact values the UI displays, extracted from API
 * payloads without any transformation. Keeping this layer free of
 * rounding or client-side recomputation is what guarantees that every
 * displayed quantity equals what the API returned.
 */

import type {
  Frame,
  HypothesisJson,
  SegmentationSummary,
  SegmentJson,
} from "./api.js";

export interface SegmentRow {
  index: number;
  start: number[];
  mHat: number[];
  span: [number, number];
}

export function segmentationRows(summary: SegmentationSummary): SegmentRow[] {
  return summary.segments.map((s: SegmentJson) => ({
    index: s.index,
    start: s.start,
    mHat: s.m_hat,
    span: s.span,
  }));
}

export interface HypothesisRow {
  segment: number;
  label: string;
  candidate: number[];
  displacement: number;
  verdict: string;
}

export function hypothesisRows(hyps: HypothesisJson[]): HypothesisRow[] {
  return hyps.map((h) => ({
    segment: h.segment,
    label: h.label,
    candidate: h.candidate,
    displacement: h.displacement,
    verdict: h.verdict,
  }));
}

export interface FrameReadout {
  t: number;
  position: number[];
  wrench: number[];
  phase: number;
  blocked: boolean[];
}

export function frameReadout(frame: Frame): FrameReadout {
  return {
    t: frame.t,
    position: frame.ee_pose.translation,
    wrench: frame.wrench,
    phase: frame.phase,
    blocked: frame.blocked,
  };
}

/** Times of phase switches, for tick marks on the scrub bar. */
export function phaseSwitchTimes(frames: Frame[]): number[] {
  const out: number[] = [];
  for (let i = 1; i < frames.length; i++) {
    if (frames[i].phase !== frames[i - 1].phase) out.push(frames[i].t);
  }
  return out;
}
