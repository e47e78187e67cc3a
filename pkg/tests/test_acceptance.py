"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run pytest with -s to see them all).
The convergence study and the grasp-speedup comparison dominate the
runtime; everything else is seconds.
"""

import json
import os
import time

import numpy as np
import pytest

import scenes
from oracles import ee_oracle, fd_vec, make_ee_config, make_pt_config, pt_oracle

import embersim.contact as ct
from embersim.cli import main
from embersim.energy import (
    MODEL_COROTATIONAL,
    MODEL_ORTHOGONALITY,
    Material,
    TetEnergyModel,
)
from embersim.intersection import audit_intersections
from embersim.mesh import EmbeddingMesh
from embersim.meshgen import box_tets
from embersim.reduction import MODE_FULLSPACE, SimState, System, make_context
from embersim.scene import error_metric, load_scene, run
from embersim.solver import SolverConfig, step

_DESCENT_LOGS = []  # (scene name, TrajectoryLog or violation count)


def _report(criterion, passed, detail):
    line = f"{criterion} {'PASS' if passed else 'FAIL'} - {detail}"
    print(f"\n{line}", flush=True)
    assert passed, line


def _track(name, log):
    _DESCENT_LOGS.append((name, log.total_descent_violations()))
    return log


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def squeeze_scene_path(workdir):
    return scenes.write_squeeze_scene(str(workdir / "squeeze"))


@pytest.fixture(scope="module")
def convergence_results(workdir, squeeze_scene_path):
    """A1 driver: CLI convergence study on the squeeze scene."""
    out = workdir / "conv"
    t0 = time.perf_counter()
    code = main(
        [
            "convergence",
            "--scene",
            squeeze_scene_path,
            "--out",
            str(out),
            "--h-list",
            "0.02,0.01,0.005",
            "--h-ref",
            "0.001",
        ]
    )
    wall_total = time.perf_counter() - t0
    assert code == 0
    rows = []
    with open(out / "convergence.csv") as fh:
        header = fh.readline().strip()
        assert header == "h,error,wall_ms"
        for line in fh:
            h, err, wall = line.strip().split(",")
            rows.append((float(h), float(err), float(wall)))
    return {"rows": rows, "out": out, "wall_total": wall_total}


@pytest.fixture(scope="module")
def squeeze_api_run(workdir, squeeze_scene_path):
    """The h = 0.01 squeeze case run through the engine API (A9, A10)."""
    sc = load_scene(squeeze_scene_path)
    from dataclasses import replace

    sc.solver = replace(sc.solver, h=0.01)
    out = workdir / "squeeze_api"
    log = run(sc, out_dir=str(out), write_frames=False)
    _track("squeeze_h0.01", log)
    return out


class TestA1Convergence:
    def test_first_order_slope(self, convergence_results):
        rows = convergence_results["rows"]
        hs = np.log([r[0] for r in rows])
        es = np.log([r[1] for r in rows])
        slope = float(np.polyfit(hs, es, 1)[0])
        errs = ", ".join(f"E({r[0]:g})={r[1]:.3e}" for r in rows)
        _report(
            "A1",
            0.7 <= slope <= 1.3,
            f"convergence slope {slope:.3f} in [0.7, 1.3]; {errs}; "
            f"total wall {convergence_results['wall_total']:.0f}s",
        )

    def test_wall_clock_monotone_in_h(self, convergence_results):
        rows = convergence_results["rows"]
        walls = [r[2] for r in rows]  # ordered by decreasing h
        assert walls == sorted(walls), f"wall clock not decreasing in h: {walls}"


class TestA2IntersectionFree:
    def test_plates_through_rack(self, workdir):
        path = scenes.write_rack_scene(str(workdir / "rack"), n_plates=8, h=0.01, duration=4.0)
        sc = load_scene(path)
        log = _track("rack", run(sc, keep_positions=True))
        # run() audits every frame and raises on any hit; re-audit explicitly
        violations = 0
        for x in log.positions:
            violations += len(audit_intersections(x, sc.system.topology))
        _report(
            "A2",
            violations == 0 and len(log.frames) == 400,
            f"{len(log.frames)} frames, {violations} intersecting triangle pairs (zero tolerance)",
        )


class TestA3CoulombStatics:
    def _slide(self, workdir, angle):
        path = scenes.write_incline_scene(str(workdir / f"incline{angle}"), angle, h=0.005, duration=1.0)
        sc = load_scene(path)
        log = _track(f"incline{angle}", run(sc, keep_positions=True))
        th = np.deg2rad(angle)
        downhill = np.array([np.cos(th), 0.0, -np.sin(th)])
        n_block = sc.system.bodies[0].col.n_vertices
        start = sc.system.embed_all(sc.system.q_rest)[:n_block].mean(axis=0)
        end = log.positions[-1][:n_block].mean(axis=0)
        return float(np.dot(end - start, downhill))

    def test_sticks_below_friction_cone(self, workdir):
        slide = self._slide(workdir, 20)
        _report("A3a", abs(slide) <= 1e-3, f"20 deg (tan = 0.364 < mu = 0.5): slide {slide * 1e3:.3f} mm <= 1 mm")

    def test_slides_above_friction_cone(self, workdir):
        slide = self._slide(workdir, 35)
        _report("A3b", slide >= 10e-3, f"35 deg (tan = 0.700 > mu = 0.5): slide {slide * 1e3:.1f} mm >= 10 mm")


class TestA4ForceBalance:
    def test_settled_box_supports_weight(self, workdir):
        path = scenes.write_box_drop_scene(str(workdir / "boxdrop"), duration=1.5, h=0.005)
        sc = load_scene(path)
        log = _track("box_drop", run(sc))
        mass = sc.system.bodies[0].mass.total_mass
        assert mass == pytest.approx(1.0, rel=1e-9)  # 0.1 m cube at 1000 kg/m^3
        rows = [r for r in log.forces_rows() if r[1] == "box|floor" and r[0] >= 1.0]
        force = np.array([[r[2], r[3], r[4]] for r in rows]).mean(axis=0)
        target = np.array([0.0, 0.0, 9.81])
        err = np.linalg.norm(force - target) / np.linalg.norm(target)
        _report("A4", err <= 0.02, f"floor force on settled 1 kg box {force.round(4)} N vs {target} N ({err * 100:.2f}%)")


class TestA5SpecialCases:
    def test_identity_embedding_matches_fullspace(self):
        params = ct.ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.4)

        def build(mode):
            box = scenes.identity_box_body("box", (0.1, 0.1, 0.1), (0.0, 0.0, 0.05 + 4e-4))
            base = scenes.identity_box_body("base", (0.3, 0.3, 0.06), (0.0, 0.0, -0.03), scenes.STIFF, static=True)
            return System([box, base], params, scenes.GRAVITY, mode=mode)

        sys_g = build("general")
        sys_f = build(MODE_FULLSPACE)
        cfg = SolverConfig(h=0.01)
        q = sys_g.q_rest.copy()
        state_g = SimState(q=q.copy(), qdot=np.zeros_like(q), x=sys_g.embed_all(q))
        worst = 0.0
        violations = 0
        for n in range(25):
            state_f = SimState(
                q=state_g.q.copy(), qdot=state_g.qdot.copy(), x=state_g.x.copy(),
                step_index=state_g.step_index, time=state_g.time,
            )
            new_g, st_g = step(sys_g, state_g, cfg)
            new_f, _ = step(sys_f, state_f, cfg)
            violations += st_g.descent_violations
            scale = max(np.max(np.abs(new_g.q)), 1e-30)
            worst = max(worst, float(np.max(np.abs(new_g.q - new_f.q))) / scale)
            state_g = new_g
        _DESCENT_LOGS.append(("identity_equiv", violations))
        _report("A5a", worst <= 1e-12, f"identity vs unreduced assembly: per-step max rel diff {worst:.2e} <= 1e-12")

    def test_single_tet_body_stays_affine(self):
        params = ct.ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.3)
        plate = scenes.single_tet_box_body("plate", (0.1, 0.1, 0.02), (0.0, 0.0, 0.01 + 5e-4), scenes.STIFF)
        floor = scenes.identity_box_body("floor", (0.6, 0.6, 0.04), (0.0, 0.0, -0.02), scenes.STIFF, static=True)
        system = System([plate, floor], params, scenes.GRAVITY)
        q = system.q_rest.copy()
        state = SimState(q=q, qdot=np.zeros_like(q), x=system.embed_all(q))
        cfg = SolverConfig(h=0.01)
        rest = plate.col.vertices
        A = np.hstack([rest, np.ones((rest.shape[0], 1))])
        worst = 0.0
        violations = 0
        for _ in range(50):
            state, st = step(system, state, cfg)
            violations += st.descent_violations
            xs = state.x[: rest.shape[0]]
            coef, *_ = np.linalg.lstsq(A, xs, rcond=None)
            worst = max(worst, float(np.max(np.linalg.norm(A @ coef - xs, axis=1))))
        _DESCENT_LOGS.append(("affine_fit", violations))
        _report("A5b", worst <= 1e-9, f"single-tet surface affine-fit residual {worst:.2e} m <= 1e-9 over 50 frames")


class TestA6DerivativeSuite:
    def test_all_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        worst = {}

        # elastic, both models, 100 random states each
        for label, mat in (
            ("elastic_corotational", Material(MODEL_COROTATIONAL, 1000.0, young=1e4, poisson=0.45)),
            ("elastic_orthogonality", Material(MODEL_ORTHOGONALITY, 1000.0, kappa=2e3)),
        ):
            ev, et = box_tets((1.0, 1.0, 1.0), (1, 1, 1))
            emb = EmbeddingMesh(ev, et)
            model = TetEnergyModel(emb, mat)
            w = 0.0
            for _ in range(100):
                qq = emb.vertices + 0.1 * rng.normal(size=emb.vertices.shape)
                g = model.gradient(qq)
                g_fd = fd_vec(model.energy, qq, 1e-6)
                w = max(w, np.max(np.abs(g - g_fd)) / max(np.max(np.abs(g_fd)), 1e-30))
            worst[label] = w

        # barrier through every PT and EE region tag
        params = ct.ContactParams(kappa=3.0, dhat=10.0, epsv=1e-3, mu=0.0)
        w = 0.0
        cases = []
        for region in range(7):
            for _ in range(8):
                p, t = make_pt_config(rng, region)
                cases.append(("pt", np.vstack([p, t]), region))
        for region in range(9):
            for _ in range(8):
                cases.append(("ee", make_ee_config(rng, region), region))
        assert len(cases) >= 100
        for kind, pts, region in cases:
            if kind == "pt":
                d2, g12, _ = ct.pt_d2_grad_hess(pts[0], pts[1], pts[2], pts[3], region)
            else:
                d2, g12, _ = ct.ee_d2_grad_hess(pts[0], pts[1], pts[2], pts[3], region)
            d = np.sqrt(d2)
            g = params.kappa * ct.barrier_grad(d, params.dhat) / (2.0 * d) * g12

            def energy(xf):
                v = xf.reshape(4, 3)
                if kind == "pt":
                    dd, _, _ = ct.point_triangle_distance(v[0], v[1], v[2], v[3])
                else:
                    dd, _, _, _ = ct.edge_edge_distance(v[0], v[1], v[2], v[3])
                return params.kappa * ct.barrier(np.sqrt(dd), params.dhat)

            g_fd = fd_vec(energy, pts.copy().astype(np.float64), eps=1e-6).ravel()
            w = max(w, np.max(np.abs(g - g_fd)) / max(np.max(np.abs(g_fd)), 1e-30))
        worst["barrier_all_regions"] = w

        # lagged friction with frozen lambda and frame, 100 random states
        params = ct.ContactParams(kappa=10.0, dhat=0.5, epsv=1e-3, mu=0.7)
        h = 0.01
        w = 0.0
        for _ in range(100):
            gap = float(rng.uniform(0.1, 0.4))
            x0 = np.array([[0.3, 0.3, gap], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
            tris = np.array([[1, 2, 3]])
            topo = ct.SurfaceTopology(tris, np.array([[1, 2], [2, 3], [1, 3]]), np.array([0, 1, 1, 1]))
            cset = ct.collect_pairs(x0, topo, params.dhat)
            data = ct.friction_precompute(x0, cset, params, h)
            if not data:
                continue
            x1 = x0.copy()
            x1[0, :2] += rng.uniform(-1.0, 1.0, size=2) * 3e-6

            def energy(xf):
                return ct.friction_energy_grad_hess(xf, x0, data, params, h, order=0)

            _, g, _, _ = ct.friction_energy_grad_hess(x1, x0, data, params, h)
            g_fd = fd_vec(energy, x1.copy(), eps=1e-9)
            w = max(w, np.max(np.abs(g - g_fd)) / max(np.max(np.abs(g_fd)), 1e-30))
        worst["friction_frozen_lag"] = w

        detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
        _report("A6", all(v <= 1e-6 for v in worst.values()), f"max FD rel errors: {detail} (tol 1e-6)")


class TestA7DistanceOracles:
    def test_pt_and_ee_against_dense_sampling(self):
        rng = np.random.default_rng(7)
        worst_pt = 0.0
        done = 0
        while done < 1000:
            t = rng.uniform(-1, 1, size=(3, 3))
            if np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0])) < 0.3:
                continue
            p = rng.uniform(-1.5, 1.5, size=3)
            d2, _, _ = ct.point_triangle_distance(p, t[0], t[1], t[2])
            ref = pt_oracle(p, t[0], t[1], t[2], rounds=40, n=33)
            if ref < 1e-4:
                continue
            done += 1
            worst_pt = max(worst_pt, abs(d2 - ref) / ref)
        worst_ee = 0.0
        done = 0
        while done < 1000:
            seg = rng.uniform(-1, 1, size=(4, 3))
            if min(np.linalg.norm(seg[1] - seg[0]), np.linalg.norm(seg[3] - seg[2])) < 0.2:
                continue
            d2, _, _, _ = ct.edge_edge_distance(*seg)
            ref = ee_oracle(*seg, rounds=40, n=33)
            if ref < 1e-4:
                continue
            done += 1
            worst_ee = max(worst_ee, abs(d2 - ref) / ref)
        _report(
            "A7",
            worst_pt <= 1e-6 and worst_ee <= 1e-6,
            f"1000 PT instances worst rel {worst_pt:.2e}, 1000 EE instances worst rel {worst_ee:.2e} (tol 1e-6)",
        )


class TestA8ReductionSpeedup:
    def test_coarse_embedding_is_faster(self, workdir):
        walls = {}
        for kind in ("identity", "coarse"):
            path = scenes.write_grasp_scene(str(workdir / f"grasp_{kind}"), kind)
            sc = load_scene(path)
            t0 = time.perf_counter()
            log = _track(f"grasp_{kind}", run(sc, keep_positions=True))
            walls[kind] = time.perf_counter() - t0
            for x in log.positions:  # A2-style audit on both runs
                assert audit_intersections(x, sc.system.topology) == []
            if kind == "coarse":
                ball = sc.system.bodies[0]
                assert ball.emb.n_vertices <= 40
                assert ball.col.n_vertices >= 400
        ratio = walls["identity"] / walls["coarse"]
        _report(
            "A8",
            ratio >= 1.3,
            f"coarse embedding speedup {ratio:.2f}x >= 1.3x "
            f"(identity {walls['identity']:.1f}s, coarse {walls['coarse']:.1f}s), both audits clean",
        )


class TestA9Determinism:
    def test_byte_identical_forces(self, workdir, squeeze_scene_path, convergence_results, squeeze_api_run):
        api_csv = (squeeze_api_run / "forces.csv").read_bytes()
        conv_csv = (convergence_results["out"] / "h_0.01" / "forces.csv").read_bytes()
        out8 = workdir / "squeeze_t8"
        code = main(
            ["run", "--scene", squeeze_scene_path, "--out", str(out8), "--h", "0.01", "--no-frames", "--threads", "8"]
        )
        assert code == 0
        t8_csv = (out8 / "forces.csv").read_bytes()
        same = api_csv == conv_csv == t8_csv
        _report(
            "A9",
            same and len(api_csv) > 1000,
            f"forces.csv byte-identical across two independent runs and --threads 1 vs 8 ({len(api_csv)} bytes)",
        )


class TestA10MonotoneDescent:
    def test_no_descent_violations_logged(self, squeeze_api_run):
        # runs before this point registered their violation counts
        total = sum(v for _, v in _DESCENT_LOGS)
        detail = ", ".join(f"{k}:{v}" for k, v in _DESCENT_LOGS)
        _report("A10", total == 0 and len(_DESCENT_LOGS) >= 6, f"descent violations by scene: {detail}")
