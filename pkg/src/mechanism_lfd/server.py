"""Local HTTP+JSON service for the companion UI.

One simulation session per session id; sessions are fully isolated and
commands within a session are serialized. Long-running pipeline stages
(augmentation, execution) run on worker threads and publish frames that
clients retrieve by paged polling. Payload shapes are documented in
schemas/api.schema.json.
"""

import threading
import uuid

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware

from .demo_pipeline import (DegenerateTrajectory, DemoTrajectory,
                            augment_contact, segment_trajectory)
from .control import run_sequencer
from .mechanism import Episode, load_fixture

FIXTURES = ("lock1", "lock2", "lock3", "drawer_a", "drawer_b")

# 2D sketch plane per fixture family: locks open upward in the x-z plane,
# drawers pull out in the x-y plane.
SKETCH_PLANES = {"lock1": "xz", "lock2": "xz", "lock3": "xz",
                 "drawer_a": "xy", "drawer_b": "xy"}
SKETCH_EXTENT = 0.6          # m of workspace across the canvas


class Run:
    """Frame log of one worker-thread pipeline stage."""

    def __init__(self, kind):
        self.kind = kind
        self.frames = []
        self.hypotheses = []
        self.status = "running"     # running | done | failed
        self.error = None
        self.phase = 0
        self._lock = threading.Lock()

    def add_frame(self, t, ee_pose, report):
        with self._lock:
            self.frames.append({
                "i": len(self.frames),
                "t": round(float(t), 6),
                "ee_pose": ee_pose.to_list(),
                "wrench": [float(x) for x in report.wrench],
                "phase": int(self.phase),
                "blocked": [bool(b) for b in report.blocked],
            })

    def add_hypothesis(self, res):
        with self._lock:
            self.hypotheses.append(res.to_dict())

    def finish(self, status, error=None):
        with self._lock:
            self.status = status
            self.error = error

    def page(self, start):
        with self._lock:
            frames = self.frames[start:]
            return {"from": start, "next": start + len(frames),
                    "frames": frames, "status": self.status,
                    "error": self.error}


class _RecordingEpisode(Episode):
    """Episode that mirrors every step into a Run's frame log."""

    def __init__(self, model, run):
        super().__init__(model)
        self.run = run

    def step(self, command):
        report = super().step(command)
        self.run.add_frame(self.t, self.ee_pose, report)
        return report


class Session:
    def __init__(self, fixture):
        self.id = uuid.uuid4().hex[:12]
        self.fixture = fixture
        self.model = load_fixture(fixture)
        self.demo = None
        self.segments = None
        self.plan = None
        self.runs = {}
        self.lock = threading.Lock()   # serializes stage launches


def _segment_summary(segments):
    return {
        "k": len(segments),
        "segments": [
            {"index": s.index, "start": [float(x) for x in s.start],
             "m_hat": [float(x) for x in s.m_hat],
             "span": [int(s.span[0]), int(s.span[1])]}
            for s in segments
        ],
    }


def create_app() -> FastAPI:
    app = FastAPI(title="mechanism-lfd service")
    # the browser client is served from a separate static-file origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions = {}

    def get_session(sid) -> Session:
        s = sessions.get(sid)
        if s is None:
            raise HTTPException(404, f"unknown session {sid!r}")
        return s

    def get_run(sid, rid) -> Run:
        run = get_session(sid).runs.get(rid)
        if run is None:
            raise HTTPException(404, f"unknown run {rid!r}")
        return run

    @app.post("/sessions")
    def create_session(body: dict = Body(...)):
        fixture = body.get("fixture")
        if fixture not in FIXTURES:
            raise HTTPException(422, f"unknown fixture {fixture!r}; "
                                     f"one of {list(FIXTURES)}")
        s = Session(fixture)
        sessions[s.id] = s
        return {"id": s.id, "fixture": fixture}

    @app.get("/sessions/{sid}/scene")
    def scene(sid: str):
        s = get_session(sid)
        m = s.model
        ep = Episode(m)
        handle = ep.ee_pose
        plane = SKETCH_PLANES[s.fixture]
        axes = {"xz": (0, 2), "xy": (0, 1)}[plane]
        center = [float(handle.translation[a]) for a in axes]
        return {
            "fixture": s.fixture,
            "base_pose": m.base_pose.to_list(),
            "handle_pose": handle.to_list(),
            "q": [float(x) for x in m.q_home()],
            "joints": [
                {"kind": j.kind, "axis": [float(x) for x in j.axis],
                 "q_min": j.q_min, "q_max": j.q_max, "drift": j.drift}
                for j in m.joints
            ],
            "gates": [
                {"gated_joint": g.gated_joint, "blocking": list(g.blocking),
                 "enabling_joint": g.enabling_joint,
                 "enabling": list(g.enabling)}
                for g in m.gates
            ],
            "goal": [[j, lo, hi] for j, lo, hi in m.goal],
            "projection": {"plane": plane, "center": center,
                           "extent": SKETCH_EXTENT},
        }

    @app.post("/sessions/{sid}/demonstration")
    def demonstration(sid: str, body: dict = Body(...)):
        s = get_session(sid)
        try:
            traj = DemoTrajectory.from_dict(body)
            segments = segment_trajectory(traj.opening_span())
        except DegenerateTrajectory as e:
            raise HTTPException(
                422, {"error": "DegenerateTrajectory", "detail": str(e)})
        except (KeyError, TypeError, ValueError) as e:
            raise HTTPException(
                422, {"error": "BadTrajectory", "detail": str(e)})
        with s.lock:
            s.demo = traj
            s.segments = segments
        return _segment_summary(segments)

    @app.post("/sessions/{sid}/segment")
    def segment(sid: str, body: dict = Body(default={})):
        s = get_session(sid)
        if body.get("samples"):
            try:
                traj = DemoTrajectory.from_dict(body)
                return _segment_summary(segment_trajectory(traj.opening_span()))
            except DegenerateTrajectory as e:
                raise HTTPException(
                    422, {"error": "DegenerateTrajectory", "detail": str(e)})
        if s.segments is None:
            raise HTTPException(409, "no demonstration posted yet")
        return _segment_summary(s.segments)

    def launch(s: Session, run: Run, work):
        rid = uuid.uuid4().hex[:12]
        s.runs[rid] = run

        def body():
            with s.lock:
                try:
                    work(run)
                    run.finish("done")
                except Exception as e:       # published, not raised
                    run.finish("failed", f"{type(e).__name__}: {e}")

        threading.Thread(target=body, daemon=True).start()
        return {"run_id": rid, "status": "running"}

    @app.post("/sessions/{sid}/augment")
    def augment(sid: str):
        s = get_session(sid)
        if s.segments is None:
            raise HTTPException(409, "no demonstration posted yet")
        segments = s.segments
        run = Run("augment")

        def work(run):
            ep = _RecordingEpisode(s.model, run)
            ep.attach()

            def on_segment(i):
                run.phase = i

            plan = augment_contact(ep, segments, on_segment=on_segment,
                                   on_result=run.add_hypothesis)
            s.plan = plan

        return launch(s, run, work)

    @app.post("/sessions/{sid}/execute")
    def execute(sid: str, body: dict = Body(default={})):
        s = get_session(sid)
        if s.plan is None:
            raise HTTPException(409, "no augmented plan yet; POST augment first")
        plan = s.plan
        run = Run("execute")

        def work(run):
            ep = _RecordingEpisode(s.model, run)
            ep.attach()
            seq = plan.to_sequencer(
                v_des=float(body.get("v_des", 0.03)),
                f_target=float(body.get("f_target", 5.0)))
            result = run_sequencer(seq, ep, record_trace=True)
            # rewrite frame phases from the authoritative trace
            with run._lock:
                for frame, point in zip(run.frames, result.trace):
                    frame["phase"] = int(point["phase"])
            if not result.success:
                raise RuntimeError(f"execution failed: {result.reason}")

        return launch(s, run, work)

    @app.get("/sessions/{sid}/runs/{rid}/frames")
    def frames(sid: str, rid: str,
               start: int = Query(0, alias="from", ge=0)):
        return get_run(sid, rid).page(start)

    @app.get("/sessions/{sid}/runs/{rid}/hypotheses")
    def hypotheses(sid: str, rid: str):
        run = get_run(sid, rid)
        with run._lock:
            return {"hypotheses": list(run.hypotheses),
                    "status": run.status}

    return app


def serve_api(host: str = "127.0.0.1", port: int = 8080):
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")
