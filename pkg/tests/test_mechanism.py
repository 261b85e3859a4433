"""Mechanism model loading, kinematics, gates, and episode stepping."""

import json

import numpy as np
import pytest

from mechanism_lfd.geometry import Pose
from mechanism_lfd.mechanism import (Episode, InvariantViolation, JointSpec,
                                     K_CONTACT, SchemaError, forward_kinematics,
                                     load_fixture, load_mechanism)

FIXTURES = ("lock1", "lock2", "lock3", "drawer_a", "drawer_b")


class TestLoading:
    @pytest.mark.parametrize("name", FIXTURES)
    def test_fixtures_load(self, name):
        m = load_fixture(name)
        assert m.name == name
        assert m.n >= 1
        for g in m.gates:
            assert 0 <= g.gated_joint < m.n
            assert 0 <= g.enabling_joint < m.n

    def test_unknown_fixture(self):
        with pytest.raises(SchemaError):
            load_fixture("lock99")

    def test_missing_field(self):
        with pytest.raises(SchemaError):
            load_mechanism(json.dumps({"name": "x", "joints": []}))

    def test_bad_joint_axis(self):
        with pytest.raises(InvariantViolation):
            JointSpec(kind="prismatic", axis=[0, 0, 2], q_min=0.0, q_max=1.0)

    def test_empty_range(self):
        with pytest.raises(InvariantViolation):
            JointSpec(kind="prismatic", axis=[0, 0, 1], q_min=1.0, q_max=1.0)


class TestKinematics:
    def test_home_pose_is_handle_offset(self):
        m = load_fixture("drawer_a")
        p = forward_kinematics(m, m.q_home())
        assert np.allclose(p.translation, m.handle_offset.translation,
                           atol=1e-12)

    def test_prismatic_moves_along_axis(self):
        m = load_fixture("drawer_a")
        q = m.q_home()
        p0 = forward_kinematics(m, q)
        q2 = q.copy()
        q2[0] = 0.1
        p1 = forward_kinematics(m, q2)
        assert np.allclose(p1.translation - p0.translation, [0.1, 0, 0],
                           atol=1e-12)


class TestEpisode:
    def test_free_joint_follows_command(self):
        # drawer latch is revolute joint 1 (pivot behind the handle);
        # lifting the handle (+z) rotates it without the gate interfering
        ep = Episode(load_fixture("drawer_a"))
        ep.attach()
        for _ in range(30):
            ep.step(np.array([0.0, 0.0, 0.05, 0, 0, 0]))
        assert ep.state.q[1] < -0.05

    def test_gated_joint_blocked_until_enabled(self):
        ep = Episode(load_fixture("drawer_a"))
        ep.attach()
        # pulling +x is gated on the latch being held down
        for _ in range(50):
            report = ep.step(np.array([0.05, 0, 0, 0, 0, 0]))
        assert ep.state.q[0] < 0.004
        # the rejected command shows up as reaction force along it
        assert report.wrench[0] > 0.5 * K_CONTACT * 0.05

    def test_gate_opens_when_enabler_in_window(self):
        ep = Episode(load_fixture("drawer_a"))
        ep.attach()
        ep.state.q[1] = -0.88          # latch inside enabling interval
        for _ in range(50):
            ep.step(np.array([0.05, 0, 0, 0, 0, 0]))
        assert ep.state.q[0] > 0.01

    def test_reaction_wrench_zero_in_free_motion(self):
        ep = Episode(load_fixture("drawer_a"))
        ep.attach()
        report = ep.step(np.array([0.0, 0.0, 0.02, 0, 0, 0]))
        assert abs(report.wrench[2]) < 1.0

    def test_drift_pulls_lift_down(self):
        # lock1 joint 0 has a -0.008 m/s drift (spring-loaded knob)
        ep = Episode(load_fixture("lock1"))
        ep.attach()
        ep.state.q[1] = 0.02           # travel mid-range frees the lift gate
        ep.state.q[0] = 0.02
        for _ in range(100):
            ep.step(np.zeros(6))
        assert ep.state.q[0] < 0.015

    def test_joint_limits_respected(self):
        ep = Episode(load_fixture("drawer_a"))
        ep.attach()
        for _ in range(200):
            ep.step(np.array([0.0, 0.0, 0.1, 0, 0, 0]))
        m = ep.model
        assert ep.state.q[1] >= m.joints[1].q_min - 1e-12

    def test_requires_attach(self):
        ep = Episode(load_fixture("drawer_a"))
        assert not ep.attached
        ep.attach()
        assert ep.attached

    def test_snapshot_restore(self):
        ep = Episode(load_fixture("drawer_a"))
        ep.attach()
        snap = ep.snapshot()
        for _ in range(20):
            ep.step(np.array([0, 0, 0.05, 0, 0, 0]))
        moved = ep.state.q.copy()
        ep.restore(snap)
        assert not np.allclose(ep.state.q, moved)
        assert np.allclose(ep.state.q, snap[0])
        assert ep.ee_pose.almost_equal(
            forward_kinematics(ep.model, snap[0]), 1e-12)

    def test_goal_met(self):
        m = load_fixture("drawer_a")
        q = m.q_home()
        assert not m.goal_met(q)
        q[0] = 0.22
        assert m.goal_met(q)


class TestLockOpeningPath:
    """The scripted joint path through every lock's gate sequence works."""

    @pytest.mark.parametrize("name", ("lock1", "lock2", "lock3"))
    def test_gates_traversable(self, name):
        from mechanism_lfd.demo_pipeline import (opening_schedule,
                                                 scripted_demonstration)
        m = load_fixture(name)
        traj = scripted_demonstration(m)
        # the scripted demo ends with the mechanism open
        schedule = opening_schedule(m)
        assert len(schedule) >= 1
        assert len(traj.t) > 10
