"""Build a small success-rate table across fixtures and method variants.

A reduced version of the full `mechanism-lfd run --suite table1` suite:
opening trials on one lock and the drawer-transfer row, with the
demonstration-wrench baseline for contrast, printed as an aligned table.

Run with:  python3 demos/04_report_table.py
"""

import numpy as np

from mechanism_lfd.harness import ScenarioConfig, report_table, run_open_trials


def main():
    results = []
    lock = ScenarioConfig("lock1", trials=5, seed=0,
                          yaw_range=np.deg2rad(15))
    results += run_open_trials(lock, "augmented")
    results += run_open_trials(lock, "demo_forces")
    drawer = ScenarioConfig("drawer_b", trials=5, seed=0,
                            yaw_range=np.deg2rad(10),
                            plan_fixture="drawer_a")
    results += run_open_trials(drawer, "augmented")
    report = report_table(results, suite="mini", seed=0)
    print(report.to_text())
    failures = [r for r in results if not r.success]
    if failures:
        print("failure phases (demo_forces):",
              sorted(r.failure_phase for r in failures))


if __name__ == "__main__":
    main()
