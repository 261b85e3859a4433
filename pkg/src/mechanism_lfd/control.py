"""Controller templates: pose-based visual servoing and the adaptive
compliant controller with event-driven sequencing.

PBVS turns a pose error into a proportional velocity command and exploits
the visual grasp-pose constraint. The compliant controller tracks an
estimated admissible motion direction while regulating a maintenance force
along a chosen contact direction; a sequencer chains several of them and
advances on debounced contact-changing events.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, pose_error
from .mechanism import Episode, H_CONTACT, K_CONTACT

COLLISION_FORCE = 10.0        # N, servo abort threshold
GLOBAL_TIMEOUT = 60.0         # s, whole-task budget
OBS_EPS = 1e-4                # m, minimum displacement used for adaptation
U_MAX = 0.12                  # m/s, command magnitude clamp
U_INTEGRAL_MAX = 0.05         # m/s, integral anti-windup cap


# ---------------------------------------------------------------------------
# Pose-based visual servoing


@dataclass(frozen=True)
class ServoGoal:
    grasp_pose: Pose
    gain: float = 1.0          # 1/s
    pos_tol: float = 0.005     # m
    ang_tol: float = 0.05      # rad
    collision_force: float = COLLISION_FORCE


def pbvs_step(goal: ServoGoal, current: Pose, contact_force: float = 0.0):
    """One servo update: (twist command, status).

    The twist is the log-map pose error scaled by the gain, in the base
    frame. Status is "reached" once both tolerances hold, "collided" when
    the environment reports a reaction force above threshold first.
    """
    t_err, r_err = pose_error(current, goal.grasp_pose)
    reached = (np.linalg.norm(t_err) < goal.pos_tol
               and np.linalg.norm(r_err) < goal.ang_tol)
    if reached:
        return np.zeros(6), "reached"
    if contact_force > goal.collision_force:
        return np.zeros(6), "collided"
    twist = goal.gain * np.concatenate([t_err, r_err])
    return twist, "running"


def detect_termination(goal: ServoGoal, current: Pose, contact_force: float,
                       elapsed: float, timeout: float = GLOBAL_TIMEOUT) -> str:
    """Pure servo termination predicate: running | done | failed(reason)."""
    t_err, r_err = pose_error(current, goal.grasp_pose)
    if (np.linalg.norm(t_err) < goal.pos_tol
            and np.linalg.norm(r_err) < goal.ang_tol):
        return "done"
    if contact_force > goal.collision_force:
        return "failed(collided)"
    if elapsed > timeout:
        return "failed(timeout)"
    return "running"


# ---------------------------------------------------------------------------
# Adaptive compliant controller


@dataclass(frozen=True)
class CompliantControllerSpec:
    m_hat: np.ndarray                  # unit motion direction
    f_hat: np.ndarray                  # unit force direction, or zeros
    v_des: float = 0.03                # m/s cruise speed
    f_target: float = 5.0              # N maintenance force
    k_f: float = 0.002                 # (m/s)/N, proportional force gain
    k_i: float = 0.05                  # (m/s)/(N*s), integral force gain
    k_y: float = 0.001                 # (m/s)/N, yielding gain
    alpha: float = 0.2                 # direction adaptation rate

    def __post_init__(self):
        m = np.asarray(self.m_hat, dtype=float)
        f = np.asarray(self.f_hat, dtype=float)
        if abs(np.linalg.norm(m) - 1.0) > 1e-9:
            raise ValueError("m_hat must be unit length")
        nf = np.linalg.norm(f)
        if nf > 1e-12 and abs(nf - 1.0) > 1e-9:
            raise ValueError("f_hat must be unit length or zero")
        object.__setattr__(self, "m_hat", m)
        object.__setattr__(self, "f_hat", f)

    @property
    def has_force(self):
        return np.linalg.norm(self.f_hat) > 1e-12


def update_motion_estimate(spec: CompliantControllerSpec, m_hat, dx):
    """Blend the current motion direction estimate with an observed
    displacement; below OBS_EPS the estimate is left unchanged."""
    dx = np.asarray(dx, dtype=float)
    n = np.linalg.norm(dx)
    if n <= OBS_EPS:
        return np.asarray(m_hat, dtype=float)
    blended = (1.0 - spec.alpha) * np.asarray(m_hat, dtype=float) + spec.alpha * dx / n
    bn = np.linalg.norm(blended)
    if bn < 1e-12:   # observation exactly opposite the estimate
        return dx / n
    return blended / bn


@dataclass
class CompliantState:
    """Mutable runtime state of one controller activation."""
    m_hat: np.ndarray
    f_integral: float = 0.0
    f_filtered: float = 0.0


# Measured-force low-pass factor; keeps the discrete force loop stable
# against the stiff stateless contact model.
FORCE_FILTER_BETA = 0.2


def compliant_command(spec: CompliantControllerSpec, wrench,
                      state: CompliantState = None, dt: float = 0.01):
    """Translation twist command for one step.

    v = v_des * m_hat + force regulation along f_hat - yielding against the
    orthogonal force residual. With a stateful CompliantState the force
    term is PI on a filtered measurement (zero steady-state error); without
    one it degrades to the pure proportional law.
    """
    wrench = np.asarray(wrench, dtype=float)
    force = wrench[:3]
    cmd = spec.v_des * (state.m_hat if state is not None else spec.m_hat)
    if spec.has_force:
        f_along = float(force @ spec.f_hat)
        if state is not None:
            state.f_filtered += FORCE_FILTER_BETA * (f_along - state.f_filtered)
            err = spec.f_target - state.f_filtered
            state.f_integral = float(np.clip(
                state.f_integral + spec.k_i * err * dt, 0.0, U_INTEGRAL_MAX))
            u_f = spec.k_f * err + state.f_integral
        else:
            u_f = spec.k_f * (spec.f_target - f_along)
        # press-only: maintaining contact never retreats along f_hat
        cmd = cmd + np.clip(u_f, 0.0, U_MAX) * spec.f_hat
    # yield against force components outside span{m_hat, f_hat}
    basis = [spec.m_hat]
    if spec.has_force:
        basis.append(spec.f_hat)
    f_perp = force.copy()
    b = np.linalg.qr(np.stack(basis, axis=1))[0] if basis else None
    f_perp = f_perp - b @ (b.T @ f_perp)
    cmd = cmd - spec.k_y * f_perp
    return np.concatenate([cmd, np.zeros(3)])


class AdaptiveCompliantController:
    """One activation of the compliant template against one episode."""

    def __init__(self, spec: CompliantControllerSpec):
        self.spec = spec
        self.state = CompliantState(m_hat=np.asarray(spec.m_hat, float).copy())

    @property
    def m_hat(self):
        return self.state.m_hat

    def command(self, wrench, dt=0.01):
        return compliant_command(self.spec, wrench, self.state, dt)

    def observe(self, dx):
        # motion along the maintenance direction is a force-regulation
        # artifact, not admissible-direction evidence
        dx = np.asarray(dx, dtype=float)
        if self.spec.has_force:
            dx = dx - (dx @ self.spec.f_hat) * self.spec.f_hat
        self.state.m_hat = update_motion_estimate(self.spec, self.state.m_hat, dx)


# ---------------------------------------------------------------------------
# Sequencer


# Fraction of the cruise command that must be rejected (as reaction force
# along the motion direction) before the motion counts as blocked.
STALL_FRACTION = 0.8


@dataclass(frozen=True)
class PhaseSpec:
    controller: CompliantControllerSpec
    terminate_on: str = "gained"       # contact-change kind, or "goal"
    target_position: np.ndarray = None  # optional fallback: reach within pos_tol
    pos_tol: float = 0.01
    timeout: float = 20.0

    def __post_init__(self):
        if self.terminate_on not in ("gained", "lost", "goal"):
            raise ValueError(f"bad termination kind {self.terminate_on!r}")


class MotionStallDetector:
    """Debounced gain/loss of contact along the commanded motion direction.

    The measured reaction force along m_hat reveals how much of the cruise
    command the environment rejects; sustained rejection above the stall
    threshold is a gained contact, sustained release after a stall is a
    lost contact.
    """

    def __init__(self, stall_force: float, h_c: int = H_CONTACT):
        self.stall_force = stall_force
        self.h_c = h_c
        self._above = 0
        self._below = 0
        self._stalled = False

    def update(self, wrench, m_hat) -> str:
        f_along = float(np.asarray(wrench)[:3] @ m_hat)
        if f_along >= self.stall_force:
            self._above += 1
            self._below = 0
        else:
            self._below += 1
            self._above = 0
        if not self._stalled and self._above >= self.h_c:
            self._stalled = True
            return "gained"
        if self._stalled and self._below >= self.h_c:
            self._stalled = False
            return "lost"
        return "none"


@dataclass(frozen=True)
class SequencerSpec:
    phases: tuple
    global_timeout: float = GLOBAL_TIMEOUT


@dataclass
class SequencerResult:
    success: bool
    reason: str
    phase_switches: list               # (time, from_phase, trigger)
    contact_transitions: int           # switches triggered by contact events
    trace: list = field(default_factory=list)

    @property
    def elapsed(self):
        return self.trace[-1]["t"] if self.trace else 0.0


def run_sequencer(seq: SequencerSpec, episode: Episode,
                  record_trace: bool = True) -> SequencerResult:
    """Run the phase sequence on an attached episode.

    Each phase's controller runs until its termination trigger (debounced
    contact-changing event, or the mechanism goal predicate), then the
    sequencer advances; it never revisits an earlier phase. Success means
    the mechanism goal predicate holds before the global timeout.
    """
    if not episode.attached:
        raise RuntimeError("episode must be attached before sequencing")
    switches = []
    contact_transitions = 0
    trace = []
    t0 = episode.t

    def record(phase_idx, report):
        if record_trace:
            trace.append({
                "t": episode.t - t0,
                "ee_pose": episode.ee_pose,
                "q": episode.state.q.copy(),
                "wrench": report.wrench.copy() if report is not None else np.zeros(6),
                "phase": phase_idx,
                "blocked": report.blocked if report is not None else (),
            })

    if not seq.phases:
        ok = episode.goal_met()
        return SequencerResult(ok, "empty-sequence", [], 0, trace)

    for phase_idx, phase in enumerate(seq.phases):
        ctrl = AdaptiveCompliantController(phase.controller)
        detector = MotionStallDetector(
            STALL_FRACTION * K_CONTACT * phase.controller.v_des)
        phase_t0 = episode.t
        wrench = (episode.last_report.wrench if episode.last_report is not None
                  else np.zeros(6))
        while True:
            if episode.t - t0 > seq.global_timeout:
                return SequencerResult(False, "timeout", switches,
                                       contact_transitions, trace)
            prev_p = episode.ee_pose.translation.copy()
            cmd = ctrl.command(wrench, episode.dt)
            report = episode.step(cmd)
            wrench = report.wrench
            ctrl.observe(episode.ee_pose.translation - prev_p)
            record(phase_idx, report)

            event = detector.update(report.wrench, ctrl.m_hat)
            if phase.terminate_on == "goal":
                if episode.goal_met():
                    switches.append((episode.t - t0, phase_idx, "goal"))
                    break
            elif event == phase.terminate_on:
                switches.append((episode.t - t0, phase_idx, event))
                contact_transitions += 1
                break
            if (phase.target_position is not None
                    and np.linalg.norm(episode.ee_pose.translation
                                       - phase.target_position) < phase.pos_tol):
                switches.append((episode.t - t0, phase_idx, "position"))
                break
            if episode.t - phase_t0 > phase.timeout:
                # stuck phase: move on and let the goal check decide
                switches.append((episode.t - t0, phase_idx, "phase-timeout"))
                break

    ok = episode.goal_met()
    return SequencerResult(ok, "goal" if ok else "goal-not-met", switches,
                           contact_transitions, trace)
