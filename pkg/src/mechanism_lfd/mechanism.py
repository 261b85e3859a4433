"""Quasi-static simulation of articulated mechanisms.

A mechanism is a serial chain of prismatic/revolute joints with limits,
plus "gates": intervals a joint cannot pass through unless another joint's
coordinate sits inside an enabling interval (the lock's pin-through-slot).
Commanded end-effector twists are projected onto the joint space by a
bounded least-squares solve; whatever part of the command cannot be
realized shows up as a stiffness-like reaction wrench.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose

# Reaction stiffness: newtons per (m/s) of blocked command.
K_CONTACT = 500.0
# Torque reaction stiffness, N*m per (rad/s) of blocked angular command.
K_CONTACT_ROT = 5.0
# Row weight for the angular part of the twist in the least-squares
# projection, so meter-scale translation commands are not drowned out by
# the radian-scale rotation they induce.
ROT_WEIGHT = 0.01
# Debounce length for contact-changing events (steps).
H_CONTACT = 3

DEFAULT_DT = 0.01


class SchemaError(ValueError):
    pass


class InvariantViolation(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class NotAttached(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Model types


@dataclass(frozen=True)
class JointSpec:
    kind: str                  # "prismatic" | "revolute"
    axis: np.ndarray           # unit vector, mechanism frame
    q_min: float
    q_max: float
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))  # revolute only
    drift: float = 0.0         # bias joint rate (m/s or rad/s), e.g. gravity pull

    def __post_init__(self):
        if self.kind not in ("prismatic", "revolute"):
            raise InvariantViolation(f"unknown joint kind {self.kind!r}")
        a = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise InvariantViolation(f"joint axis {a} is not unit length")
        object.__setattr__(self, "axis", a)
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=float))
        if not self.q_min < self.q_max:
            raise InvariantViolation("joint range is empty")


@dataclass(frozen=True)
class GateSpec:
    gated_joint: int
    blocking: tuple            # [a, b] on the gated joint's coordinate
    enabling_joint: int
    enabling: tuple            # [c, d] on the enabling joint's coordinate

    def __post_init__(self):
        if self.gated_joint == self.enabling_joint:
            raise InvariantViolation("gate cannot condition on its own joint")
        a, b = self.blocking
        c, d = self.enabling
        if not (a < b and c < d):
            raise InvariantViolation("gate intervals must be nonempty")

    def enabled(self, q):
        c, d = self.enabling
        return c <= q[self.enabling_joint] <= d


@dataclass(frozen=True)
class MechanismModel:
    name: str
    base_pose: Pose
    joints: tuple              # JointSpec, serial order
    gates: tuple               # GateSpec
    handle_offset: Pose        # distal link -> handle (grasp) frame
    goal: tuple                # (joint index, lo, hi) intervals defining "open"

    @property
    def n(self):
        return len(self.joints)

    def with_base_pose(self, pose):
        return replace(self, base_pose=pose)

    def q_home(self):
        # Fixtures are authored so the closed state sits at each joint's
        # zero coordinate (always inside the range).
        q = np.zeros(self.n)
        for j, js in enumerate(self.joints):
            q[j] = min(max(q[j], js.q_min), js.q_max)
        return q

    def goal_met(self, q):
        return all(lo <= q[j] <= hi for j, lo, hi in self.goal)


@dataclass
class MechanismState:
    q: np.ndarray
    attached: bool = False
    ee_pose: Pose = field(default_factory=Pose)


@dataclass(frozen=True)
class ContactReport:
    wrench: np.ndarray         # 6-vector, reaction felt at the end-effector
    blocked: tuple             # per-joint: commanded motion clamped this step
    contact_change: str        # "gained" | "lost" | "none" (undebounced)


# ---------------------------------------------------------------------------
# Kinematics


def _joint_transform(spec: JointSpec, q: float) -> Pose:
    if spec.kind == "prismatic":
        return Pose.from_translation(spec.axis * q)
    rot = Pose.from_rotvec(spec.axis * q)
    # rotate about an axis through the pivot point
    t = spec.pivot - rot.rot().apply(spec.pivot)
    return Pose(rot.rotation, t)


def forward_kinematics(model: MechanismModel, q) -> Pose:
    """Handle pose in the base frame for joint coordinates q."""
    q = np.asarray(q, dtype=float)
    for j, js in enumerate(model.joints):
        if not (js.q_min - 1e-9 <= q[j] <= js.q_max + 1e-9):
            raise OutOfRange(f"joint {j}: q={q[j]} outside [{js.q_min}, {js.q_max}]")
    pose = model.base_pose
    for js, qj in zip(model.joints, q):
        pose = pose.compose(_joint_transform(js, qj))
    return pose.compose(model.handle_offset)


def handle_jacobian(model: MechanismModel, q):
    """Geometric Jacobian (6 x n) of the handle twist w.r.t. joint rates,
    expressed in the base frame."""
    q = np.asarray(q, dtype=float)
    n = model.n
    J = np.zeros((6, n))
    handle_p = forward_kinematics(model, q).translation
    pose = model.base_pose
    for j, js in enumerate(model.joints):
        axis_w = pose.rot().apply(js.axis)
        if js.kind == "prismatic":
            J[:3, j] = axis_w
        else:
            pivot_w = pose.apply(js.pivot)
            J[:3, j] = np.cross(axis_w, handle_p - pivot_w)
            J[3:, j] = axis_w
        pose = pose.compose(_joint_transform(js, q[j]))
    return J


# ---------------------------------------------------------------------------
# Constrained stepping


def _rate_bounds(model, q, dt):
    """Per-joint allowed velocity interval from limits and gates."""
    lo = np.empty(model.n)
    hi = np.empty(model.n)
    for j, js in enumerate(model.joints):
        q_lo, q_hi = js.q_min, js.q_max
        for g in model.gates:
            if g.gated_joint != j or g.enabled(q):
                continue
            a, b = g.blocking
            if q[j] <= a:
                q_hi = min(q_hi, a)
            elif q[j] >= b:
                q_lo = max(q_lo, b)
            else:
                # inside the blocked interval with the gate disabled: jammed
                q_lo, q_hi = q[j], q[j]
        lo[j] = (q_lo - q[j]) / dt
        hi[j] = (q_hi - q[j]) / dt
    return lo, hi


def _solve_rates(J, twist, drift, lo, hi):
    """Bounded least-squares joint rates for a desired handle twist.

    Active-set iteration: solve unconstrained on the free joints, clamp
    violators to their bound, redistribute the remainder.
    """
    n = J.shape[1]
    qd = np.zeros(n)
    desired = np.zeros(n)
    free = np.ones(n, dtype=bool)
    for _ in range(n + 1):
        resid = twist - J[:, ~free] @ qd[~free]
        sol, *_ = np.linalg.lstsq(J[:, free], resid, rcond=None)
        want = sol + drift[free]
        desired[free] = want
        clamped_now = np.zeros(n, dtype=bool)
        vals = np.clip(want, lo[free], hi[free])
        qd[free] = vals
        idx = np.flatnonzero(free)
        clamped_now[idx] = np.abs(vals - want) > 1e-12
        if not clamped_now.any():
            break
        free &= ~clamped_now
        if not free.any():
            break
    return qd, desired


def step_constrained(model: MechanismModel, state: MechanismState, command,
                     dt: float = DEFAULT_DT, prev_blocked=None):
    """Advance the mechanism one step under a commanded handle twist.

    Returns (new state, ContactReport). The command is a 6-vector
    (linear m/s, angular rad/s) in the base frame.
    """
    if not state.attached:
        raise NotAttached("end-effector is not attached to the handle")
    if dt <= 0:
        raise ValueError("dt must be positive")
    command = np.asarray(command, dtype=float)
    if command.shape == (3,):
        command = np.concatenate([command, np.zeros(3)])
    q = state.q
    J = handle_jacobian(model, q)
    lo, hi = _rate_bounds(model, q, dt)
    drift = np.array([js.drift for js in model.joints])
    w = np.array([1.0, 1.0, 1.0, ROT_WEIGHT, ROT_WEIGHT, ROT_WEIGHT])
    qd, desired = _solve_rates(J * w[:, None], command * w, drift, lo, hi)
    q_new = q + qd * dt

    realized = J @ qd
    wrench = np.concatenate([
        K_CONTACT * (command[:3] - realized[:3]),
        K_CONTACT_ROT * (command[3:] - realized[3:]),
    ])

    blocked = tuple(
        bool(abs(desired[j] - qd[j]) > 1e-9 and abs(desired[j]) > 1e-6)
        for j in range(model.n)
    )
    if prev_blocked is None:
        change = "none"
    else:
        gained = any(b and not p for b, p in zip(blocked, prev_blocked))
        lost = any(p and not b for b, p in zip(blocked, prev_blocked))
        change = "gained" if gained else ("lost" if lost else "none")

    new_state = MechanismState(q=q_new, attached=True,
                               ee_pose=forward_kinematics(model, q_new))
    return new_state, ContactReport(wrench=wrench, blocked=blocked,
                                    contact_change=change)


def detect_contact_change(reports, h_c: int = H_CONTACT) -> str:
    """Debounced contact-change classification over a chronological report
    sequence: an event fires only when a direction's blocked flag differs
    from the pre-window baseline for the last h_c consecutive reports."""
    if len(reports) < h_c + 1:
        return "none"
    window = reports[-h_c:]
    baseline = reports[-(h_c + 1)].blocked
    n = len(baseline)
    for j in range(n):
        vals = [r.blocked[j] for r in window]
        if all(vals) and not baseline[j]:
            return "gained"
        if not any(vals) and baseline[j]:
            return "lost"
    return "none"


class ContactChangeDetector:
    """Stateful debounced detector used by the controller sequencer.

    The baseline constraint set is captured from the first few reports after
    reset, so directions that are blocked from the start of a phase (for
    example a maintained force pressing a gated joint) do not fire events.
    """

    def __init__(self, h_c: int = H_CONTACT):
        self.h_c = h_c
        self.reset()

    def reset(self):
        self.baseline = None
        self._streak_flags = None
        self._streak = 0
        self._count = 0

    def update(self, report: ContactReport) -> str:
        flags = report.blocked
        self._count += 1
        if self.baseline is None:
            if self._count >= self.h_c:
                self.baseline = flags
            return "none"
        if flags == self._streak_flags:
            self._streak += 1
        else:
            self._streak_flags = flags
            self._streak = 1
        if self._streak < self.h_c or flags == self.baseline:
            return "none"
        gained = any(b and not p for b, p in zip(flags, self.baseline))
        lost = any(p and not b for p, b in zip(self.baseline, flags))
        self.baseline = flags
        if gained:
            return "gained"
        if lost:
            return "lost"
        return "none"


# ---------------------------------------------------------------------------
# Episode


class Episode:
    """One simulation episode: a mechanism plus the attached end-effector.

    Owns mutable state; never share an Episode across concurrent runs.
    """

    def __init__(self, model: MechanismModel, dt: float = DEFAULT_DT):
        self.model = model
        self.dt = dt
        q0 = model.q_home()
        self.state = MechanismState(q=q0.copy(), attached=False,
                                    ee_pose=forward_kinematics(model, q0))
        self.t = 0.0
        self.last_report = None

    def attach(self):
        self.state.attached = True
        self.state.ee_pose = forward_kinematics(self.model, self.state.q)

    @property
    def attached(self):
        return self.state.attached

    @property
    def ee_pose(self) -> Pose:
        return self.state.ee_pose

    def step(self, command) -> ContactReport:
        prev = self.last_report.blocked if self.last_report else None
        self.state, report = step_constrained(self.model, self.state, command,
                                              self.dt, prev_blocked=prev)
        self.t += self.dt
        self.last_report = report
        return report

    def goal_met(self):
        return self.model.goal_met(self.state.q)

    def snapshot(self):
        return (self.state.q.copy(), self.state.attached, self.t,
                self.last_report)

    def restore(self, snap):
        q, attached, t, report = snap
        self.state = MechanismState(q=q.copy(), attached=attached,
                                    ee_pose=forward_kinematics(self.model, q))
        self.t = t
        self.last_report = report


# ---------------------------------------------------------------------------
# Document loading

_REQUIRED_FIELDS = ("base_pose", "joints", "handle_offset", "goal")


def load_mechanism(document) -> MechanismModel:
    """Build a MechanismModel from a parsed JSON document (or JSON text)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e}") from e
    if not isinstance(document, dict):
        raise SchemaError("mechanism document must be an object")
    for f in _REQUIRED_FIELDS:
        if f not in document:
            raise SchemaError(f"missing field {f!r}")
    try:
        base = Pose.from_dict(document["base_pose"])
        handle = Pose.from_dict(document["handle_offset"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"bad pose field: {e}") from e

    joints = []
    for i, jd in enumerate(document["joints"]):
        try:
            joints.append(JointSpec(
                kind=jd["kind"],
                axis=np.asarray(jd["axis"], dtype=float),
                q_min=float(jd["range"][0]),
                q_max=float(jd["range"][1]),
                pivot=np.asarray(jd.get("pivot", [0.0, 0.0, 0.0]), dtype=float),
                drift=float(jd.get("drift", 0.0)),
            ))
        except (KeyError, TypeError, IndexError) as e:
            raise SchemaError(f"joint {i}: {e}") from e

    gates = []
    for i, gd in enumerate(document.get("gates", [])):
        try:
            gates.append(GateSpec(
                gated_joint=int(gd["gated_joint"]),
                blocking=(float(gd["blocking"][0]), float(gd["blocking"][1])),
                enabling_joint=int(gd["enabling_joint"]),
                enabling=(float(gd["enabling"][0]), float(gd["enabling"][1])),
            ))
        except (KeyError, TypeError, IndexError) as e:
            raise SchemaError(f"gate {i}: {e}") from e
        if not (0 <= gates[-1].gated_joint < len(joints)
                and 0 <= gates[-1].enabling_joint < len(joints)):
            raise InvariantViolation(f"gate {i} references unknown joint")

    goal = []
    for gd in document["goal"]:
        j = int(gd["joint"])
        if not 0 <= j < len(joints):
            raise InvariantViolation("goal references unknown joint")
        goal.append((j, float(gd["interval"][0]), float(gd["interval"][1])))
    if not goal:
        raise InvariantViolation("goal must name at least one joint interval")

    return MechanismModel(
        name=document.get("name", "mechanism"),
        base_pose=base,
        joints=tuple(joints),
        gates=tuple(gates),
        handle_offset=handle,
        goal=tuple(goal),
    )


BUNDLED_FIXTURES = ("lock1", "lock2", "lock3", "drawer_a", "drawer_b")


def load_fixture(name: str) -> MechanismModel:
    """Load one of the bundled mechanism fixtures by name."""
    from importlib import resources

    if name not in BUNDLED_FIXTURES:
        raise SchemaError(f"unknown fixture {name!r}; have {BUNDLED_FIXTURES}")
    text = resources.files("mechanism_lfd.fixtures").joinpath(f"{name}.json").read_text()
    return load_mechanism(text)
