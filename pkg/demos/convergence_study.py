"""Time-step refinement on the grasp scene: backward Euler is O(h).

Runs the squeeze scene at several step sizes against a finer reference
and fits the log-log slope of the time-averaged position error. Uses a
reduced setup (shorter horizon, coarser reference) so it finishes in
about a minute; the full study lives in the acceptance suite and the
`embersim convergence` command.
"""

import os
import sys
from dataclasses import replace

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
import scenes

from embersim.scene import error_metric, load_scene, run

out = "out/convergence"
path = scenes.write_squeeze_scene(out, duration=2.0)

h_ref = 0.0025
h_list = [0.02, 0.01, 0.005]


def run_at(h):
    sc = load_scene(path)
    sc.solver = replace(sc.solver, h=h)
    return run(sc, keep_positions=True, write_frames=False)


print(f"reference at h = {h_ref}")
ref = run_at(h_ref)
errors = []
for h in h_list:
    log = run_at(h)
    err = error_metric(log, ref, h, 2.0)
    errors.append(err)
    print(f"h = {h:<6g} E(h) = {err:.4e}")

slope = float(np.polyfit(np.log(h_list), np.log(errors), 1)[0])
print(f"fitted log-log slope: {slope:.3f} (first order = 1.0)")
