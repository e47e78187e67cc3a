"""Coulomb statics on an inclined plane: stick below the cone, slide above.

With mu = 0.5 the block holds at 20 degrees (tan 20 = 0.364) and slides
at 35 degrees (tan 35 = 0.700). The small residual motion at 20 degrees
is the smoothed-friction creep, bounded by eps_v.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))
import scenes

from embersim.scene import load_scene, run

for angle in (20, 35):
    out = f"out/incline_{angle}"
    path = scenes.write_incline_scene(out, angle, h=0.005, duration=1.0)
    sc = load_scene(path)
    log = run(sc, out_dir=out, keep_positions=True, write_frames=False)
    th = np.deg2rad(angle)
    downhill = np.array([np.cos(th), 0.0, -np.sin(th)])
    n_block = sc.system.bodies[0].col.n_vertices
    start = sc.system.embed_all(sc.system.q_rest)[:n_block].mean(axis=0)
    end = log.positions[-1][:n_block].mean(axis=0)
    slide = float(np.dot(end - start, downhill))
    verdict = "sticks" if abs(slide) < 1e-3 else "slides"
    print(f"{angle:2d} deg: tan = {np.tan(th):.3f} vs mu = 0.5 -> {verdict}, moved {slide * 1e3:8.2f} mm in 1 s")
