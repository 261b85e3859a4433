/**
 * Typed client for the mechanism-lfd HTTP+JSON service.
 *
 * The UI is a pure client: every quantity it displays comes from these
 * payloads unmodified. Payload shapes mirror schemas/api.schema.json.
 */

export interface PoseJson {
  quat_xyzw: number[];
  translation: number[];
}

export interface Projection {
  plane: string; // "xz" | "xy"
  center: number[]; // workspace coords of the canvas center, in-plane
  extent: number; // meters of workspace across the canvas
}

export interface JointJson {
  kind: string;
  axis: number[];
  q_min: number;
  q_max: number;
  drift: number;
}

export interface GateJson {
  gated_joint: number;
  blocking: number[];
  enabling_joint: number;
  enabling: number[];
}

export interface SceneResponse {
  fixture: string;
  base_pose: PoseJson;
  handle_pose: PoseJson;
  q: number[];
  joints: JointJson[];
  gates: GateJson[];
  goal: number[][];
  projection: Projection;
}

export interface DemoSample {
  t: number;
  ee_pose: PoseJson;
  wrench: number[];
  gripper: number;
}

export interface DemoTrajectoryJson {
  source?: string;
  samples: DemoSample[];
}

export interface SegmentJson {
  index: number;
  start: number[];
  m_hat: number[];
  span: [number, number];
}

export interface SegmentationSummary {
  k: number;
  segments: SegmentJson[];
}

export interface StartRunResponse {
  run_id: string;
  status: string;
}

export interface Frame {
  i: number;
  t: number;
  ee_pose: PoseJson;
  wrench: number[];
  phase: number;
  blocked: boolean[];
}

export interface FramesPage {
  from: number;
  next: number;
  frames: Frame[];
  status: string; // "running" | "done" | "failed"
  error: string | null;
}

export interface HypothesisJson {
  segment: number;
  candidate: number[];
  label: string;
  displacement: number;
  verdict: string; // "valid" | "moved" | "skipped"
}

export interface HypothesesResponse {
  hypotheses: HypothesisJson[];
  status: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(detail)}`);
  }
}

export class Client {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await res.json();
    if (!res.ok) throw new ApiError(res.status, payload.detail ?? payload);
    return payload as T;
  }

  createSession(fixture: string): Promise<{ id: string; fixture: string }> {
    return this.request("POST", "/sessions", { fixture });
  }

  scene(sid: string): Promise<SceneResponse> {
    return this.request("GET", `/sessions/${sid}/scene`);
  }

  postDemonstration(
    sid: string,
    traj: DemoTrajectoryJson,
  ): Promise<SegmentationSummary> {
    return this.request("POST", `/sessions/${sid}/demonstration`, traj);
  }

  segment(sid: string): Promise<SegmentationSummary> {
    return this.request("POST", `/sessions/${sid}/segment`, {});
  }

  augment(sid: string): Promise<StartRunResponse> {
    return this.request("POST", `/sessions/${sid}/augment`);
  }

  execute(
    sid: string,
    opts: { v_des?: number; f_target?: number } = {},
  ): Promise<StartRunResponse> {
    return this.request("POST", `/sessions/${sid}/execute`, opts);
  }

  frames(sid: string, rid: string, from = 0): Promise<FramesPage> {
    return this.request("GET", `/sessions/${sid}/runs/${rid}/frames?from=${from}`);
  }

  hypotheses(sid: string, rid: string): Promise<HypothesesResponse> {
    return this.request("GET", `/sessions/${sid}/runs/${rid}/hypotheses`);
  }
}
