"""Squeeze a soft block between two scripted plates, lift, and hold.

Demonstrates scripted kinematics, barrier contact, and lagged friction
carrying the block's weight during the lift. Prints a compact force
timeline; full CSV logs land in out/grasp/.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
import scenes  # scene builders shared with the test suite

from embersim.scene import load_scene, run

out = "out/grasp"
scene_path = scenes.write_squeeze_scene(out, h=0.01, duration=2.0, gravity_on=True)
sc = load_scene(scene_path)
print(f"bodies: {[b.name for b in sc.system.bodies]}, {sc.n_steps()} steps at h = {sc.solver.h} s")

log = run(sc, out_dir=out, keep_positions=True)

block_n = sc.system.bodies[0].col.n_vertices
z0 = log.positions[0][:block_n, 2].mean()
z1 = log.positions[-1][:block_n, 2].mean()
print(f"block height: {z0:.4f} m -> {z1:.4f} m (plates lift 0.05 m)")

print("t [s]   |f_x| squeeze [N]   f_z lift [N]   pairs")
for frame in log.frames[19::40]:
    key = ("block", "plate_left")
    if key in frame.forces:
        f, n = frame.forces[key]
        print(f"{frame.t:5.2f}   {abs(f[0]):14.3f}   {f[2]:12.3f}   {n:5d}")
print(f"outputs in {out}/")
