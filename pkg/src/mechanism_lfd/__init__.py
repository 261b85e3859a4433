"""Single-demonstration learning of articulated-mechanism manipulation.

Library layout:

- geometry: poses, pinhole camera, grasp-label projection
- mechanism: quasi-static articulated mechanism simulation and fixtures
- control: PBVS, adaptive compliant controller, event-driven sequencer
- demo_pipeline: demonstrations, segmentation, Algorithm-1 force
  augmentation, funnel-view dataset generation
- perception: rendering, hue detection, k-NN yaw estimation, search
- harness: scenario configs, Table-I experiment suites, reports
- server / cli: local HTTP+JSON service and command-line entry points
"""

__version__ = "1.0.0"
