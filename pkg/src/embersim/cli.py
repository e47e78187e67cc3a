"""Command-line entry point: run, convergence, audit, verify.

Exit codes: 0 success, 1 error, 2 completed with solver diagnostics
(line-search stall or iteration cap). Human-readable messages go to
stderr; stdout carries only tables and progress lines.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .errors import EngineError
from .formats import format_float, load_obj
from .intersection import audit_intersections
from .scene import error_metric, load_scene, run, write_forces_csv, write_stats_csv
from .verification import format_table, run_suite


def _build_parser():
    parser = argparse.ArgumentParser(prog="embersim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scene=True):
        if scene:
            p.add_argument("--scene", required=True, help="scene JSON file")
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--h", type=float, default=None, help="override time step (s)")
            p.add_argument("--duration", type=float, default=None, help="override duration (s)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (recorded; math kernels delegate to BLAS)")
        p.add_argument("--seed", type=int, default=0, help="RNG seed for randomized checks")

    p_run = sub.add_parser("run", help="simulate a scene and write logs + frame snapshots")
    common(p_run)
    p_run.add_argument("--no-frames", action="store_true", help="skip per-frame OBJ snapshots")

    p_conv = sub.add_parser("convergence", help="time-step refinement study against a fine reference")
    common(p_conv)
    p_conv.add_argument("--h-list", default="0.02,0.01,0.005", help="comma-separated step sizes")
    p_conv.add_argument("--h-ref", type=float, default=1e-3, help="reference step size")

    p_audit = sub.add_parser("audit", help="re-audit written frame snapshots for intersections")
    p_audit.add_argument("--frames", required=True, help="directory of frame_*.obj files")
    common(p_audit, scene=False)

    p_verify = sub.add_parser("verify", help="run the built-in verification suite")
    common(p_verify, scene=False)
    p_verify.add_argument("--corrupt", default="", help=argparse.SUPPRESS)  # negative-control hook
    return parser


def _effective_config(scene_path, scene, args):
    cfg = {
        "scene": os.path.abspath(scene_path),
        "duration": scene.duration,
        "gravity": list(scene.gravity),
        "contact": {
            "kappa": scene.contact.kappa,
            "dhat": scene.contact.dhat,
            "epsv": scene.contact.epsv,
            "mu": scene.contact.mu,
        },
        "solver": {
            "h": scene.solver.h,
            "tol_v": scene.solver.tol_v,
            "max_newton": scene.solver.max_newton,
            "beta": scene.solver.beta,
            "c1": scene.solver.c1,
            "ccd_slack": scene.solver.ccd_slack,
            "ccd_conservative": scene.solver.ccd_conservative,
        },
        "threads": args.threads,
        "seed": args.seed,
    }
    return cfg


def _apply_overrides(scene, args):
    from dataclasses import replace

    if args.h is not None:
        scene.solver = replace(scene.solver, h=args.h)
    if args.duration is not None:
        scene.duration = args.duration
    return scene


def _write_effective(out_dir, cfg):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config_effective.json"), "w") as fh:
        json.dump(cfg, fh, indent=1, sort_keys=True)


def cmd_run(args):
    scene = _apply_overrides(load_scene(args.scene), args)
    _write_effective(args.out, _effective_config(args.scene, scene, args))
    log = run(scene, out_dir=args.out, write_frames=not args.no_frames)
    stalls = sum(1 for f in log.frames if f.stats.stalled)
    caps = sum(1 for f in log.frames if f.stats.max_iters_hit)
    print(f"completed {len(log.frames)} steps; outputs in {args.out}")
    if stalls or caps:
        print(f"solver diagnostics: {stalls} stalled step(s), {caps} at iteration cap", file=sys.stderr)
        return 2
    return 0


def cmd_convergence(args):
    h_list = [float(tok) for tok in args.h_list.split(",") if tok]
    if not h_list:
        raise EngineError("empty --h-list")
    scene = _apply_overrides(load_scene(args.scene), args)
    _write_effective(args.out, _effective_config(args.scene, scene, args))

    def run_at(h):
        sc = load_scene(args.scene)
        if args.duration is not None:
            sc.duration = args.duration
        from dataclasses import replace

        sc.solver = replace(sc.solver, h=h)
        sub = os.path.join(args.out, f"h_{h:g}")
        os.makedirs(sub, exist_ok=True)
        t0 = time.perf_counter()
        log = run(sc, out_dir=sub, write_frames=False, keep_positions=True)
        wall = (time.perf_counter() - t0) * 1e3
        return log, wall

    print(f"reference run at h = {args.h_ref:g}")
    ref_log, ref_wall = run_at(args.h_ref)
    rows = []
    for h in h_list:
        print(f"run at h = {h:g}")
        log, wall = run_at(h)
        err = error_metric(log, ref_log, h, scene.duration)
        rows.append((h, err, wall))
    with open(os.path.join(args.out, "convergence.csv"), "w") as fh:
        fh.write("h,error,wall_ms\n")
        for h, err, wall in rows:
            fh.write(f"{format_float(h)},{format_float(err)},{format_float(wall)}\n")
    if len(rows) >= 2:
        hs = np.log([r[0] for r in rows])
        es = np.log([max(r[1], 1e-300) for r in rows])
        slope = float(np.polyfit(hs, es, 1)[0])
        print(f"fitted log-log slope: {slope:.3f}")
    else:
        print("fitted log-log slope: n/a (single h)")
    return 0


def cmd_audit(args):
    import re

    from .contact import SurfaceTopology
    from .mesh import unique_edges

    frame_re = re.compile(r"frame_(\d+)\.obj$")
    files = sorted(f for f in os.listdir(args.frames) if frame_re.search(f))
    if not files:
        raise EngineError(f"no frame_*.obj files under {args.frames}")
    bad_frames = 0
    for name in files:
        verts, tris = load_obj(os.path.join(args.frames, name))
        topo = SurfaceTopology(tris, unique_edges(tris), np.zeros(len(verts), np.int64))
        hits = audit_intersections(verts, topo)
        if hits:
            bad_frames += 1
            print(f"{name}: {len(hits)} intersecting triangle pair(s), first {hits[0]}")
    print(f"audited {len(files)} frames: {bad_frames} with intersections")
    return 0 if bad_frames == 0 else 1


def cmd_verify(args):
    corrupt = {tok for tok in args.corrupt.split(",") if tok}
    results = run_suite(seed=args.seed, corrupt=corrupt)
    print(format_table(results))
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "convergence": cmd_convergence,
        "audit": cmd_audit,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
