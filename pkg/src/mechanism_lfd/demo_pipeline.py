"""From a raw demonstration to instantiated controllers and datasets.

Three stages live here: segmenting the demonstrated trajectory into motion
directions, augmenting each segment with a contact-force direction by
physically probing force hypotheses (future motion, past motion, gravity,
in that order), and augmenting the grasp demonstration with funnel-shaped
camera sweeps that yield labeled detector/yaw training data.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import (Pose, relative_pose, yaw_of_grasp, grasp_square_to_bbox,
                       GraspLabel, SQUARE_MARGIN)
from .mechanism import Episode, InvariantViolation
from .control import (AdaptiveCompliantController, CompliantControllerSpec,
                      PhaseSpec, SequencerSpec)

GRAVITY_DIR = np.array([0.0, 0.0, -1.0])

# Segmentation defaults
THETA_SEG = np.deg2rad(30.0)
SMOOTH_WINDOW = 5
L_MIN = 0.005            # m
SUSTAIN = 3              # samples the angle must stay above threshold

# Hypothesis evaluation defaults
K_PUSH = 5.0             # N
T_EVAL = 1.0             # s
EPS_MOVE = 0.005         # m
DELTA_P = 0.01           # m, transit arrival tolerance
T_TRANSIT = 12.0         # s


class DegenerateTrajectory(ValueError):
    pass


class TransitFailure(RuntimeError):
    pass


class RestoreFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Demonstration container


@dataclass
class DemoTrajectory:
    """Timestamped end-effector samples; the last sample's pose is the
    demonstrated grasp pose by convention."""

    t: np.ndarray            # (n,), strictly increasing seconds
    poses: list              # n Pose
    wrench: np.ndarray       # (n, 6)
    gripper: np.ndarray      # (n,), opening in meters
    source: str = "scripted"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if len(self.t) < 2:
            raise DegenerateTrajectory("need at least 2 samples")
        if not np.all(np.diff(self.t) > 0):
            raise DegenerateTrajectory("timestamps must be strictly increasing")
        self.wrench = np.asarray(self.wrench, dtype=float).reshape(len(self.t), 6)
        self.gripper = np.asarray(self.gripper, dtype=float)

    def positions(self):
        return np.array([p.translation for p in self.poses])

    @property
    def grasp_pose(self) -> Pose:
        """Pose at the first gripper closure; the final pose if the
        gripper never closes."""
        closed = self.gripper < 1e-3
        if closed.any():
            return self.poses[int(np.argmax(closed))]
        return self.poses[-1]

    def opening_span(self):
        """Sub-trajectory where the gripper is closed (the in-contact
        opening motion); the whole trajectory if it never closes."""
        closed = self.gripper < 1e-3
        if not closed.any():
            return self
        i0 = int(np.argmax(closed))
        if len(self.t) - i0 < 2:
            return self
        return DemoTrajectory(self.t[i0:], self.poses[i0:], self.wrench[i0:],
                              self.gripper[i0:], self.source)

    def to_dict(self):
        return {
            "source": self.source,
            "samples": [
                {"t": float(t), "ee_pose": p.to_list(),
                 "wrench": list(map(float, w)), "gripper": float(g)}
                for t, p, w, g in zip(self.t, self.poses, self.wrench, self.gripper)
            ],
        }

    @staticmethod
    def from_dict(d):
        s = d["samples"]
        return DemoTrajectory(
            t=np.array([x["t"] for x in s]),
            poses=[Pose.from_dict(x["ee_pose"]) for x in s],
            wrench=np.array([x["wrench"] for x in s]),
            gripper=np.array([x["gripper"] for x in s]),
            source=d.get("source", "human-UI"),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @staticmethod
    def load(path):
        with open(path) as f:
            return DemoTrajectory.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# Scripted demonstrations


def opening_schedule(model):
    """Joint targets, in order, that a competent demonstrator would drive
    through to open the mechanism.

    Derived from the gate structure: every enabling joint is brought to
    the midpoint of its (limit-clipped) enabling interval before the
    joints it unlocks, then each goal joint to its goal midpoint.
    """
    q_home = model.q_home()
    enabling_for = {}
    for g in model.gates:
        if g.enabling[0] <= q_home[g.enabling_joint] <= g.enabling[1]:
            continue  # already satisfied at home, no demonstrated motion needed
        lo = max(g.enabling[0], model.joints[g.enabling_joint].q_min)
        hi = min(g.enabling[1], model.joints[g.enabling_joint].q_max)
        enabling_for.setdefault(g.enabling_joint, []).append((lo + hi) / 2.0)
    goal_joints = {j: (lo + hi) / 2.0 for j, lo, hi in model.goal}

    targets = {}
    deps = {}
    for j, mids in enabling_for.items():
        targets[j] = mids[0]
        deps[j] = set()
    for j, mid in goal_joints.items():
        targets[j] = mid
        deps.setdefault(j, set())
    for g in model.gates:
        # the gate imposes an ordering only if the gated joint cannot move
        # right away, i.e. the enabling joint starts outside its window
        if (g.gated_joint in targets and g.enabling_joint in targets
                and not g.enabling[0] <= q_home[g.enabling_joint] <= g.enabling[1]):
            deps[g.gated_joint].add(g.enabling_joint)

    order = []
    pending = dict(deps)
    while pending:
        ready = [j for j, d in pending.items() if not (d & set(pending))]
        if not ready:
            raise InvariantViolation(
                f"{model.name}: cyclic gate dependencies, cannot schedule")
        for j in sorted(ready):
            order.append(j)
            del pending[j]
    return [(j, targets[j]) for j in order]


PRISMATIC_DEMO_SPEED = 0.03    # m/s
REVOLUTE_DEMO_SPEED = 0.6      # rad/s
APPROACH_HEIGHT = 0.12         # m
GRIPPER_OPEN = 0.08            # m


def scripted_demonstration(model, dt=0.02, noise=0.0, rng=None,
                           schedule=None) -> DemoTrajectory:
    """Synthesize a clean single demonstration: descend onto the handle,
    close the gripper, then drive the opening schedule joint by joint.

    Optional zero-mean Gaussian position noise (std `noise` meters) mimics
    a shaky human hand.
    """
    from .mechanism import forward_kinematics

    if schedule is None:
        schedule = opening_schedule(model)
    q = model.q_home()
    grasp = forward_kinematics(model, q)

    poses, gripper = [], []
    # approach: straight descent onto the grasp pose
    n_app = max(2, int(0.8 / dt))
    for a in np.linspace(1.0, 0.0, n_app):
        poses.append(Pose(grasp.rotation,
                          grasp.translation + np.array([0, 0, APPROACH_HEIGHT * a])))
        gripper.append(GRIPPER_OPEN)
    # closure dwell
    for g in np.linspace(GRIPPER_OPEN, 0.0, 5):
        poses.append(grasp)
        gripper.append(g)
    # opening motion
    for j, target in schedule:
        speed = (PRISMATIC_DEMO_SPEED if model.joints[j].kind == "prismatic"
                 else REVOLUTE_DEMO_SPEED)
        span = target - q[j]
        steps = max(2, int(abs(span) / (speed * dt)))
        for qj in np.linspace(q[j], target, steps + 1)[1:]:
            q[j] = qj
            poses.append(forward_kinematics(model, q))
            gripper.append(0.0)

    if noise > 0:
        rng = np.random.default_rng() if rng is None else rng
        poses = [Pose(p.rotation, p.translation + rng.normal(0, noise, 3))
                 for p in poses]
    n = len(poses)
    return DemoTrajectory(t=dt * np.arange(n), poses=poses,
                          wrench=np.zeros((n, 6)), gripper=np.array(gripper),
                          source="scripted")


# ---------------------------------------------------------------------------
# Segmentation


@dataclass(frozen=True)
class Segment:
    index: int               # 0-based
    start: np.ndarray        # p_i, segment start position
    m_hat: np.ndarray        # unit net motion direction
    span: tuple              # (first, last) sample indices, inclusive


def _smooth(positions, w):
    if w <= 1:
        return positions
    kernel = np.ones(w) / w
    padded = np.vstack([np.repeat(positions[:1], w // 2, axis=0), positions,
                        np.repeat(positions[-1:], w - 1 - w // 2, axis=0)])
    return np.stack([np.convolve(padded[:, k], kernel, mode="valid")
                     for k in range(3)], axis=1)


def segment_trajectory(traj: DemoTrajectory, theta_seg: float = THETA_SEG,
                       w: int = SMOOTH_WINDOW, l_min: float = L_MIN):
    """Split a demonstration into spans of consistent motion direction.

    A new segment opens when the angle between the running mean direction
    and the incoming increment stays above theta_seg for SUSTAIN samples;
    segments with net length below l_min merge into their neighbor.
    """
    pos = _smooth(traj.positions(), w)
    inc = np.diff(pos, axis=0)
    norms = np.linalg.norm(inc, axis=1)
    total = norms.sum()
    if total < l_min:
        raise DegenerateTrajectory(f"path length {total:.4f} m below {l_min}")

    moving = norms > 1e-6
    boundaries = [0]
    mean_dir = None
    run = 0
    for j in range(len(inc)):
        if not moving[j]:
            continue
        u = inc[j] / norms[j]
        if mean_dir is None:
            mean_dir = u.copy()
            continue
        ang = np.arccos(np.clip(u @ mean_dir / np.linalg.norm(mean_dir), -1, 1))
        if ang > theta_seg:
            run += 1
            if run >= SUSTAIN:
                boundaries.append(j - SUSTAIN + 1)
                mean_dir = inc[boundaries[-1]:j + 1].sum(axis=0)
                mean_dir /= np.linalg.norm(mean_dir)
                run = 0
        else:
            run = 0
            mean_dir = mean_dir + u
            mean_dir /= np.linalg.norm(mean_dir)
    boundaries.append(len(pos) - 1)

    # build spans, then merge any below the minimum net length into a
    # neighbor (previous if available, otherwise the next)
    merged = [(boundaries[i], boundaries[i + 1])
              for i in range(len(boundaries) - 1)
              if boundaries[i + 1] > boundaries[i]]
    while len(merged) > 1:
        lengths = [np.linalg.norm(pos[b] - pos[a]) for a, b in merged]
        j = int(np.argmin(lengths))
        if lengths[j] >= l_min:
            break
        if j > 0:
            merged[j - 1] = (merged[j - 1][0], merged[j][1])
        else:
            merged[1] = (merged[0][0], merged[1][1])
        del merged[j]

    segments = []
    for i, (a, b) in enumerate(merged):
        net = pos[b] - pos[a]
        n = np.linalg.norm(net)
        if n < 1e-9:
            continue
        segments.append(Segment(index=i, start=pos[a].copy(),
                                m_hat=net / n, span=(a, b)))
    if not segments:
        raise DegenerateTrajectory("no usable motion segments")
    return segments


# ---------------------------------------------------------------------------
# Algorithm: force-direction augmentation


@dataclass(frozen=True)
class ForceHypothesisResult:
    segment: int
    candidate: np.ndarray
    label: str               # "next" | "prev" | "gravity"
    displacement: float      # m observed during the probe
    verdict: str             # "valid" | "moved" | "skipped"

    def to_dict(self):
        return {"segment": self.segment, "candidate": list(map(float, self.candidate)),
                "label": self.label, "displacement": self.displacement,
                "verdict": self.verdict}


@dataclass
class AugmentedPlan:
    m_hats: list             # unit 3-vectors
    f_hats: list             # unit 3-vectors or zeros
    provenance: list         # winning hypothesis label per segment, or "none"
    starts: list             # p_i per segment
    hypothesis_results: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.m_hats)

    def to_sequencer(self, v_des=0.03, f_target=5.0, phase_timeout=6.0,
                     global_timeout=20.0) -> SequencerSpec:
        phases = []
        for i in range(self.k):
            spec = CompliantControllerSpec(m_hat=self.m_hats[i],
                                           f_hat=self.f_hats[i],
                                           v_des=v_des, f_target=f_target)
            last = i == self.k - 1
            phases.append(PhaseSpec(spec,
                                    terminate_on="goal" if last else "gained",
                                    timeout=global_timeout if last else phase_timeout))
        return SequencerSpec(tuple(phases), global_timeout=global_timeout)

    def to_dict(self):
        return {
            "pairs": [{"m_hat": list(map(float, m)), "f_hat": list(map(float, f)),
                       "provenance": p, "start": list(map(float, s))}
                      for m, f, p, s in zip(self.m_hats, self.f_hats,
                                            self.provenance, self.starts)],
            "hypotheses": [h.to_dict() for h in self.hypothesis_results],
            "warnings": self.warnings,
        }

    @staticmethod
    def from_dict(d):
        pairs = d["pairs"]
        return AugmentedPlan(
            m_hats=[np.array(p["m_hat"]) for p in pairs],
            f_hats=[np.array(p["f_hat"]) for p in pairs],
            provenance=[p["provenance"] for p in pairs],
            starts=[np.array(p["start"]) for p in pairs],
            warnings=d.get("warnings", []),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @staticmethod
    def load(path):
        with open(path) as f:
            return AugmentedPlan.from_dict(json.load(f))


def hypothesize_forces(i: int, segments, gravity=GRAVITY_DIR):
    """Ordered force-direction candidates for segment i (0-based):
    next segment's motion, previous segment's motion, gravity; undefined
    neighbors are skipped and gravity is always present and last."""
    k = len(segments)
    out = []
    if i + 1 < k:
        out.append(("next", np.asarray(segments[i + 1].m_hat, dtype=float)))
    if i - 1 >= 0:
        out.append(("prev", np.asarray(segments[i - 1].m_hat, dtype=float)))
    out.append(("gravity", np.asarray(gravity, dtype=float)))
    return out


def _drive_to_pose(episode: Episode, target: Pose, timeout=3.0, gain=4.0,
                   tol=1e-4):
    """Simple pose servo on the attached episode (used to undo probe
    motion); returns the final position error."""
    steps = int(timeout / episode.dt)
    for _ in range(steps):
        err_t = target.translation - episode.ee_pose.translation
        err_r = (target.rot() * episode.ee_pose.rot().inv()).as_rotvec()
        if np.linalg.norm(err_t) < tol and np.linalg.norm(err_r) < 10 * tol:
            break
        episode.step(np.concatenate([gain * err_t, gain * err_r]))
    return float(np.linalg.norm(target.translation - episode.ee_pose.translation))


def evaluate_force_hypothesis(episode: Episode, f_hat, segment: int = -1,
                              label: str = "", k_push: float = K_PUSH,
                              t_eval: float = T_EVAL,
                              eps_move: float = EPS_MOVE) -> ForceHypothesisResult:
    """Probe one force-direction hypothesis: regulate a pure contact force
    along f_hat and watch for end-effector motion. Valid means the
    environment holds (no movement); afterwards the probe motion is undone
    by driving back to the starting pose."""
    if not episode.attached:
        raise RuntimeError("episode must be attached")
    f_hat = np.asarray(f_hat, dtype=float)
    start_pose = episode.ee_pose
    spec = CompliantControllerSpec(m_hat=[1.0, 0.0, 0.0], f_hat=f_hat,
                                   v_des=0.0, f_target=k_push)
    ctrl = AdaptiveCompliantController(spec)
    wrench = np.zeros(6)
    max_disp = 0.0
    for _ in range(int(t_eval / episode.dt)):
        cmd = ctrl.command(wrench, episode.dt)
        report = episode.step(cmd)
        wrench = report.wrench
        d = np.linalg.norm(episode.ee_pose.translation - start_pose.translation)
        max_disp = max(max_disp, d)
    verdict = "valid" if max_disp <= eps_move else "moved"
    if verdict == "moved":
        residual = _drive_to_pose(episode, start_pose)
        if residual > 2 * eps_move:
            raise RestoreFailure(
                f"could not return to probe start, residual {residual:.4f} m")
    return ForceHypothesisResult(segment=segment, candidate=f_hat, label=label,
                                 displacement=max_disp, verdict=verdict)


def augment_contact(episode: Episode, segments, k_push=K_PUSH, t_eval=T_EVAL,
                    eps_move=EPS_MOVE, delta_p=DELTA_P,
                    gravity=GRAVITY_DIR, on_segment=None,
                    on_result=None) -> AugmentedPlan:
    """Run the force-direction augmentation over all segments.

    For each segment the candidates are probed in order and the first
    non-moving one wins; the robot then moves to the next segment's start
    with the freshly instantiated compliant controller rather than by
    replaying demonstrated positions.

    Optional progress callbacks: on_segment(i) fires when segment i's
    probing starts, on_result(res) after every individual probe.
    """
    if not episode.attached:
        raise RuntimeError("episode must be attached")
    k = len(segments)
    plan = AugmentedPlan(m_hats=[], f_hats=[], provenance=[], starts=[])
    for i, seg in enumerate(segments):
        if on_segment is not None:
            on_segment(i)
        chosen = None
        for label, cand in hypothesize_forces(i, segments, gravity):
            res = evaluate_force_hypothesis(episode, cand, segment=i,
                                            label=label, k_push=k_push,
                                            t_eval=t_eval, eps_move=eps_move)
            plan.hypothesis_results.append(res)
            if on_result is not None:
                on_result(res)
            if res.verdict == "valid":
                chosen = (label, cand)
                break
        if chosen is None:
            plan.warnings.append(f"segment {i}: no valid force hypothesis")
            label, cand = "none", np.zeros(3)
        else:
            label, cand = chosen
        plan.m_hats.append(np.asarray(seg.m_hat, dtype=float))
        plan.f_hats.append(cand)
        plan.provenance.append(label)
        plan.starts.append(np.asarray(seg.start, dtype=float))

        if i + 1 < k:
            _transit(episode, seg.m_hat, cand, segments[i + 1].start, delta_p)
    return plan


def _transit(episode, m_hat, f_hat, target_p, delta_p, timeout=T_TRANSIT):
    spec = CompliantControllerSpec(m_hat=m_hat, f_hat=f_hat)
    ctrl = AdaptiveCompliantController(spec)
    wrench = (episode.last_report.wrench if episode.last_report is not None
              else np.zeros(6))
    for _ in range(int(timeout / episode.dt)):
        if np.linalg.norm(episode.ee_pose.translation - target_p) < delta_p:
            # close the remaining gap precisely so the next hypothesis
            # probes start from the demonstrated segment start
            _drive_to_pose(episode,
                           Pose(episode.ee_pose.rotation, np.asarray(target_p)),
                           timeout=2.0, gain=10.0, tol=1e-3)
            return
        prev = episode.ee_pose.translation.copy()
        cmd = ctrl.command(wrench, episode.dt)
        report = episode.step(cmd)
        wrench = report.wrench
        ctrl.observe(episode.ee_pose.translation - prev)
    raise TransitFailure(
        f"could not reach next segment start {target_p} within {timeout}s; "
        f"at {episode.ee_pose.translation}")


# ---------------------------------------------------------------------------
# Funnel poses and label generation


@dataclass(frozen=True)
class FunnelPlan:
    radii: tuple = (0.12, 0.095, 0.07, 0.045, 0.02)      # m, top to bottom
    heights: tuple = (0.35, 0.30, 0.25, 0.20, 0.15)      # m above grasp
    positions_per_ring: int = 25
    yaw_offsets: tuple = tuple(np.linspace(-np.pi / 2, np.pi / 2, 20))

    def __post_init__(self):
        if len(self.radii) != len(self.heights):
            raise ValueError("radii and heights must align")
        if any(h <= 0 for h in self.heights) or any(r < 0 for r in self.radii):
            raise ValueError("radii must be >= 0 and heights > 0")

    @property
    def count(self):
        return len(self.radii) * self.positions_per_ring * len(self.yaw_offsets)


def generate_funnel_poses(grasp_pose: Pose, plan: FunnelPlan = FunnelPlan()):
    """Camera-sweep poses on stacked rings over the grasp pose, crossed
    with every yaw offset; each pose keeps the end-effector perpendicular
    over the grasp point (pure yaw relative to the grasp orientation)."""
    poses = []
    for radius, height in zip(plan.radii, plan.heights):
        for j in range(plan.positions_per_ring):
            phi = 2 * np.pi * j / plan.positions_per_ring
            offset = np.array([radius * np.cos(phi), radius * np.sin(phi), height])
            for dyaw in plan.yaw_offsets:
                rot = (Rotation_z(dyaw) * grasp_pose.rot()).as_quat()
                poses.append(Pose(rot, grasp_pose.translation + offset))
    return poses


def Rotation_z(angle):
    from scipy.spatial.transform import Rotation
    return Rotation.from_rotvec([0.0, 0.0, angle])


def approach_poses(grasp_pose: Pose, height: float = 0.30, n: int = 50):
    """Straight-line approach above the grasp pose, no yaw variation (the
    demonstration-only dataset's camera path)."""
    out = []
    for a in np.linspace(1.0, 0.12 / height, n):
        out.append(Pose(grasp_pose.rotation,
                        grasp_pose.translation + np.array([0, 0, height * a])))
    return out


@dataclass
class LabeledRecord:
    image: np.ndarray        # (H, W, 3) uint8
    depth: np.ndarray        # (H, W) float meters
    label: GraspLabel
    ee_pose: Pose


@dataclass
class Dataset:
    records: list = field(default_factory=list)
    dropped: int = 0

    def __len__(self):
        return len(self.records)

    def save(self, directory):
        import os
        from PIL import Image

        os.makedirs(directory, exist_ok=True)
        index = []
        for i, r in enumerate(self.records):
            img_name = f"img_{i:05d}.png"
            depth_name = f"img_{i:05d}_depth.png"
            Image.fromarray(r.image).save(os.path.join(directory, img_name))
            depth_mm = np.clip(r.depth * 1000.0, 0, 65535).astype(np.uint16)
            Image.fromarray(depth_mm).save(os.path.join(directory, depth_name))
            index.append(json.dumps({
                "image": img_name, "depth": depth_name,
                "box": r.label.box.to_dict(), "yaw": r.label.yaw,
                "relative_pose": r.label.relative_pose.to_list(),
                "ee_pose": r.ee_pose.to_list(),
            }))
        with open(os.path.join(directory, "index.jsonl"), "w") as f:
            f.write("\n".join(index) + "\n")
        with open(os.path.join(directory, "meta.json"), "w") as f:
            json.dump({"count": len(self.records), "dropped": self.dropped}, f)

    @staticmethod
    def load(directory):
        import os
        from PIL import Image
        from .geometry import PixelBox

        ds = Dataset()
        with open(os.path.join(directory, "index.jsonl")) as f:
            for line in f:
                d = json.loads(line)
                img = np.asarray(Image.open(os.path.join(directory, d["image"])))
                depth = np.asarray(Image.open(
                    os.path.join(directory, d["depth"]))).astype(float) / 1000.0
                box = PixelBox(d["box"]["u1"], d["box"]["v1"],
                               d["box"]["u2"], d["box"]["v2"],
                               d["box"].get("out_of_view", False))
                ds.records.append(LabeledRecord(
                    image=img, depth=depth,
                    label=GraspLabel(box, d["yaw"], Pose.from_dict(d["relative_pose"])),
                    ee_pose=Pose.from_dict(d["ee_pose"])))
        try:
            with open(os.path.join(directory, "meta.json")) as f:
                ds.dropped = json.load(f).get("dropped", 0)
        except FileNotFoundError:
            pass
        return ds


def generate_grasp_labels(poses, grasp_pose: Pose, cam, object_width: float,
                          scene, render_fn) -> Dataset:
    """Render each collection pose and attach the back-projected square
    bounding box plus relative yaw as its label; out-of-view captures are
    dropped and counted."""
    from .geometry import NonPositiveDepth

    side = object_width * SQUARE_MARGIN
    ds = Dataset()
    for ee_pose in poses:
        try:
            box = grasp_square_to_bbox(cam, ee_pose, grasp_pose, side)
        except NonPositiveDepth:
            ds.dropped += 1
            continue
        if box.out_of_view:
            ds.dropped += 1
            continue
        rel = relative_pose(ee_pose, grasp_pose)
        yaw = yaw_of_grasp(rel)
        img = render_fn(cam, ee_pose)
        ds.records.append(LabeledRecord(image=img.pixels, depth=img.depth,
                                        label=GraspLabel(box, yaw, rel),
                                        ee_pose=ee_pose))
    return ds
