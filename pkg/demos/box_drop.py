"""Drop a stiff box onto the floor and read off the support force.

The box settles inside the barrier layer; once at rest, the floor pushes
back with exactly the box's weight. Writes forces.csv / stats.csv and
frame snapshots under out/box_drop/.
"""

import json
import os

import numpy as np

from embersim.formats import save_obj
from embersim.meshgen import box_surface
from embersim.scene import load_scene, run

out = "out/box_drop"
os.makedirs(out, exist_ok=True)

# assets: a 1 kg box (0.1 m cube at 1000 kg/m^3) and a wide floor slab
sv, st = box_surface((0.1, 0.1, 0.1), divisions=1)
save_obj(os.path.join(out, "box.obj"), sv, st)
fv, ft = box_surface((0.6, 0.6, 0.04), divisions=1)
save_obj(os.path.join(out, "floor.obj"), fv, ft)

scene = {
    "duration": 1.5,
    "gravity": [0.0, 0.0, -9.81],
    "contact": {"kappa": 1e4, "dhat": 1e-3, "epsv": 1e-3, "mu": 0.5},
    "solver": {"h": 0.005, "tol_v": 1e-5},
    "bodies": [
        {
            "name": "box",
            "surface": "box.obj",
            "embedding": "identity",
            "material": {"model": "affine", "density": 1000.0, "kappa": 1e7},
            "pose": {"translation": [0.0, 0.0, 0.0505]},
        },
        {
            "name": "floor",
            "surface": "floor.obj",
            "embedding": "identity",
            "material": {"model": "affine", "density": 1000.0, "kappa": 1e7},
            "pose": {"translation": [0.0, 0.0, -0.02]},
            "scripted": "static",
        },
    ],
}
scene_path = os.path.join(out, "box_drop.json")
with open(scene_path, "w") as fh:
    json.dump(scene, fh, indent=1)

sc = load_scene(scene_path)
log = run(sc, out_dir=out)

mass = sc.system.bodies[0].mass.total_mass
rows = [r for r in log.forces_rows() if r[1] == "box|floor" and r[0] >= 1.0]
fz = np.mean([r[4] for r in rows])
print(f"box mass          : {mass:.3f} kg")
print(f"settled floor force: {fz:.4f} N (weight {mass * 9.81:.4f} N)")
print(f"min distance ever  : {min(f.stats.min_dist for f in log.frames):.2e} m (> 0)")
print(f"outputs in {out}/")
