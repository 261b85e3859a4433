"""Open a displaced lock with the sequenced adaptive compliant controllers.

The augmented plan from the nominal pose is re-expressed at a randomly
displaced mechanism and handed to the sequencer.  Contact-changing
events (debounced gains and losses of a blocked direction) drive the
phase transitions; the per-phase maintenance forces keep the pin pressed
into the narrow slot while the motion direction adapts.

Run with:  python3 demos/02_open_with_compliance.py
"""

import numpy as np

from mechanism_lfd.control import run_sequencer
from mechanism_lfd.geometry import Pose
from mechanism_lfd.harness import get_pipeline, transform_plan
from mechanism_lfd.mechanism import Episode


def main():
    pipeline = get_pipeline("lock1")
    rng = np.random.default_rng(42)
    dx, dy = rng.uniform(-0.03, 0.03, 2)
    yaw = rng.uniform(-np.deg2rad(15), np.deg2rad(15))
    delta = Pose.from_rotvec([0.0, 0.0, yaw], [dx, dy, 0.0])
    print(f"mechanism displaced by {np.round(delta.translation[:2], 3)} m, "
          f"{np.rad2deg(delta.rot().as_rotvec()[2]):.1f} deg yaw")

    model = pipeline.model.with_base_pose(
        delta.compose(pipeline.model.base_pose))
    plan = transform_plan(pipeline.plan, delta)
    episode = Episode(model)
    episode.attach()
    result = run_sequencer(plan.to_sequencer(), episode)

    print(f"success={result.success} in {episode.t:.1f} s, "
          f"{result.contact_transitions} contact-change transitions")
    for t, phase, trigger in result.phase_switches:
        print(f"  phase {phase} ended at t={t:.2f} s ({trigger})")
    print("final joint state q =", np.round(episode.state.q, 3))


if __name__ == "__main__":
    main()
