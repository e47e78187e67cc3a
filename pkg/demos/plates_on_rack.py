"""Drop thin stiff plates through a wireframe rack of thin rods.

The stress test for the intersection-free guarantee: 2 mm plates falling
fast onto 4 mm rods, resolved by conservative CCD step clamping. Every
frame is audited with exact triangle-triangle tests.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
import scenes

from embersim.intersection import audit_intersections
from embersim.scene import load_scene, run

out = "out/rack"
path = scenes.write_rack_scene(out, n_plates=8, h=0.01, duration=2.0)
sc = load_scene(path)
print(f"{len(sc.bodies)} bodies, {sc.system.n_surf} surface vertices, {sc.n_steps()} steps")

log = run(sc, out_dir=out, keep_positions=True)

violations = sum(len(audit_intersections(x, sc.system.topology)) for x in log.positions)
min_dist = min(f.stats.min_dist for f in log.frames)
print(f"intersecting triangle pairs over {len(log.frames)} frames: {violations}")
print(f"closest approach anywhere: {min_dist:.2e} m (strictly positive)")
print(f"frame snapshots in {out}/frames/ (re-audit with: embersim audit --frames {out}/frames)")
