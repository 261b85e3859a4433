"""Segment a single demonstration and augment it with contact forces.

A scripted kinesthetic demonstration opens the bundled lock: lift the
pin, slide it through the slot, slide the bolt.  Segmentation recovers
one (start, motion-direction) pair per stroke, and the augmentation
probes each segment start with candidate maintenance forces, keeping the
first one the mechanism does not yield to.

Run with:  python3 demos/01_segment_and_augment.py
"""

import numpy as np

from mechanism_lfd.demo_pipeline import (augment_contact,
                                         scripted_demonstration,
                                         segment_trajectory)
from mechanism_lfd.mechanism import Episode, load_fixture


def main():
    model = load_fixture("lock1")
    demo = scripted_demonstration(model)
    print(f"demonstration: {len(demo.t)} samples over {demo.t[-1]:.1f} s")

    span = demo.opening_span()
    segments = segment_trajectory(span)
    print(f"\nsegments (k={len(segments)}):")
    for i, seg in enumerate(segments):
        print(f"  {i}: start={np.round(seg.start, 3)} "
              f"m_hat={np.round(seg.m_hat, 2)} span={seg.span}")

    episode = Episode(model)
    episode.attach()
    plan = augment_contact(episode, segments)
    print("\naugmented plan:")
    for i in range(plan.k):
        print(f"  {i}: m_hat={np.round(plan.m_hats[i], 2)} "
              f"f_hat={np.round(plan.f_hats[i], 2)} "
              f"({plan.provenance[i]})")
    if plan.warnings:
        print("warnings:", plan.warnings)


if __name__ == "__main__":
    main()
