"""Built-in verification suite behind the ``verify`` CLI command.

Each check is named, seeded, and independent of the code path it judges
(finite differences, sampling oracles, closed forms, statics). A check
name listed in ``corrupt`` has a deliberate error injected into the
quantity under test, which must turn that check red (negative control for
the harness itself).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import contact as ct
from .ccd import accd_toi
from .energy import MODEL_COROTATIONAL, MODEL_ORTHOGONALITY, Material, TetEnergyModel
from .mesh import CollisionMesh, EmbeddingMesh
from .meshgen import box_surface, box_tets, delaunay_tets, enclosing_tet
from .reduction import BodyAssembly, MODE_FULLSPACE, SimState, System
from .solver import SolverConfig, step


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


GRAVITY = np.array([0.0, 0.0, -9.81])
STIFF = Material(MODEL_ORTHOGONALITY, 1000.0, kappa=1e7)


def _fd_gradient(fn, q, eps):
    g = np.zeros_like(q)
    for i in range(q.size):
        qp = q.copy()
        qp.flat[i] += eps
        qm = q.copy()
        qm.flat[i] -= eps
        g.flat[i] = (fn(qp) - fn(qm)) / (2 * eps)
    return g


def _rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-30))


def _check_fd_elastic(model_name, rng, corrupted):
    if model_name == MODEL_COROTATIONAL:
        mat = Material(MODEL_COROTATIONAL, 1000.0, young=1e4, poisson=0.45)
    else:
        mat = Material(MODEL_ORTHOGONALITY, 1000.0, kappa=2.0e3)
    ev, et = box_tets((1.0, 1.0, 1.0), (1, 1, 1))
    emb = EmbeddingMesh(ev, et)
    model = TetEnergyModel(emb, mat)
    worst = 0.0
    for _ in range(20):
        q = emb.vertices + 0.1 * rng.normal(size=emb.vertices.shape)
        g = model.gradient(q)
        if corrupted:
            g = g + 1e-3 * np.max(np.abs(g))
        g_fd = _fd_gradient(model.energy, q, 1e-6)
        worst = max(worst, _rel_err(g, g_fd))
    return worst


def _single_pt_scene(gap):
    x = np.array(
        [
            [0.3, 0.3, gap],
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [2.0, 2.0, 1.0],
            [3.0, 2.0, 1.0],
        ]
    )
    tris = np.array([[1, 2, 3], [0, 4, 5]])
    edges = np.array([[0, 4], [0, 5], [4, 5], [1, 2], [2, 3], [1, 3]])
    return x, ct.SurfaceTopology(tris, edges, np.array([0, 1, 1, 1, 0, 0]))


def _check_fd_barrier(rng, corrupted):
    params = ct.ContactParams(kappa=10.0, dhat=0.5, epsv=1e-3, mu=0.0)
    worst = 0.0
    for _ in range(10):
        x, topo = _single_pt_scene(gap=float(rng.uniform(0.1, 0.4)))
        x = x + 0.01 * rng.normal(size=x.shape)
        cset = ct.collect_pairs(x, topo, params.dhat)
        _, g, _, _ = ct.barrier_energy_grad_hess(x, cset, params)
        if corrupted:
            g = g + 1e-3 * np.max(np.abs(g))

        def energy(xf):
            cs = ct.collect_pairs(xf, topo, params.dhat)
            d = np.sqrt(np.concatenate([cs.pt_d2, cs.ee_d2]))
            return params.kappa * float(np.sum(ct.barrier(d, params.dhat))) if d.size else 0.0

        worst = max(worst, _rel_err(g, _fd_gradient(energy, x.copy(), 1e-7)))
    return worst


def _check_fd_friction(rng, corrupted):
    params = ct.ContactParams(kappa=10.0, dhat=0.5, epsv=1e-3, mu=0.7)
    h = 0.01
    worst = 0.0
    for _ in range(10):
        x0, topo = _single_pt_scene(gap=0.2)
        cset = ct.collect_pairs(x0, topo, params.dhat)
        data = ct.friction_precompute(x0, cset, params, h)
        x1 = x0.copy()
        x1[0, :2] += rng.uniform(-4e-6, 4e-6, size=2)
        _, g, _, _ = ct.friction_energy_grad_hess(x1, x0, data, params, h)
        if corrupted:
            g = g + 1e-3 * max(np.max(np.abs(g)), 1e-12)

        def energy(xf):
            return ct.friction_energy_grad_hess(xf, x0, data, params, h, order=0)

        worst = max(worst, _rel_err(g, _fd_gradient(energy, x1.copy(), 1e-9)))
    return worst


def _zoom_oracle(eval_grid, rounds=60, n=33):
    lo = np.array([0.0, 0.0])
    hi = np.array([1.0, 1.0])
    best = np.inf
    for _ in range(rounds):
        s = np.linspace(lo[0], hi[0], n)
        t = np.linspace(lo[1], hi[1], n)
        S, T = np.meshgrid(s, t)
        d2 = eval_grid(S.ravel(), T.ravel())
        k = int(np.argmin(d2))
        best = min(best, float(d2[k]))
        center = np.array([S.ravel()[k], T.ravel()[k]])
        size = hi - lo
        at_edge = ((center <= lo + 1e-15) & (lo > 0.0)) | ((center >= hi - 1e-15) & (hi < 1.0))
        half = size if np.any(at_edge) else 1.5 * (size / (n - 1))
        lo = np.clip(center - half, 0.0, 1.0)
        hi = np.clip(center + half, 0.0, 1.0)
    return best


def _check_distance_oracle(kind, rng, corrupted, trials=150):
    worst = 0.0
    done = 0
    while done < trials:
        if kind == "pt":
            t = rng.uniform(-1, 1, size=(3, 3))
            if np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0])) < 0.3:
                continue
            p = rng.uniform(-1.5, 1.5, size=3)
            d2, _, _ = ct.point_triangle_distance(p, t[0], t[1], t[2])

            def grid(a, b, p=p, t=t):
                u = a
                v = b * (1.0 - a)
                pts = t[0] + u[:, None] * (t[1] - t[0]) + v[:, None] * (t[2] - t[0])
                return np.einsum("nd,nd->n", pts - p, pts - p)

            ref = _zoom_oracle(grid)
        else:
            seg = rng.uniform(-1, 1, size=(4, 3))
            if min(np.linalg.norm(seg[1] - seg[0]), np.linalg.norm(seg[3] - seg[2])) < 0.2:
                continue
            d2, _, _, _ = ct.edge_edge_distance(*seg)

            def grid(a, b, seg=seg):
                pa = seg[0] + a[:, None] * (seg[1] - seg[0])
                pb = seg[2] + b[:, None] * (seg[3] - seg[2])
                return np.einsum("nd,nd->n", pa - pb, pa - pb)

            ref = _zoom_oracle(grid)
        if ref < 1e-4:
            continue
        done += 1
        if corrupted:
            d2 = d2 * (1.0 + 1e-4)
        worst = max(worst, abs(d2 - ref) / ref)
    return worst


def _check_barrier_values(corrupted):
    got = ct.barrier(0.5, 1.0)
    if corrupted:
        got *= 1.0 + 1e-6
    return abs(got - 0.25 * np.log(2.0)) / (0.25 * np.log(2.0))


def _check_accd(corrupted):
    pos = np.array([[0, 0, 1.0], [0, 0, 0.0], [1, 0, 0.0], [0, 1, 0.0]])
    disp = np.array([[0, 0, -1.0], [0, 0, 1.0], [0, 0, 1.0], [0, 0, 1.0]])
    t = accd_toi(ct.KIND_PT, pos, disp, slack=0.1)
    if corrupted:
        t += 1e-3
    return abs(t - 0.45) / 0.45


def _identity_box(name, extents, center, static=False):
    sv, st = box_surface(extents, divisions=1, center=center)
    col = CollisionMesh(sv, st)
    emb = EmbeddingMesh(sv, delaunay_tets(sv))
    scripted = np.arange(emb.n_vertices) if static else None
    motion = (lambda t: (np.eye(3), np.zeros(3), np.zeros(3))) if static else None
    return BodyAssembly(name, col, emb, STIFF, scripted, motion)


def _check_identity_equivalence(corrupted):
    params = ct.ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.4)

    def build(mode):
        box = _identity_box("box", (0.1, 0.1, 0.1), (0.0, 0.0, 0.05 + 4e-4))
        floor = _identity_box("floor", (0.6, 0.6, 0.04), (0.0, 0.0, -0.02), static=True)
        return System([box, floor], params, GRAVITY, mode=mode)

    from .reduction import make_context

    sys_g = build("general")
    sys_f = build(MODE_FULLSPACE)
    q = sys_g.q_rest.copy()
    state = SimState(q=q, qdot=np.zeros_like(q), x=sys_g.embed_all(q))
    ctx_g = make_context(sys_g, state, 0.01)
    ctx_f = make_context(sys_f, state, 0.01)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        qq = q + 2e-4 * rng.normal(size=q.shape)
        ev_g = sys_g.eval(qq, ctx_g, order=1)
        ev_f = sys_f.eval(qq, ctx_f, order=1)
        if corrupted:
            ev_g.grad[0] += 1e-6
        worst = max(worst, abs(ev_g.energy - ev_f.energy) / max(abs(ev_f.energy), 1e-30))
        worst = max(worst, _rel_err(ev_g.grad, ev_f.grad))
    return worst


def _check_affine_reachability(corrupted):
    sv, st = box_surface((0.1, 0.1, 0.02), divisions=1, center=(0.0, 0.0, 0.01 + 5e-4))
    col = CollisionMesh(sv, st)
    ev, et = enclosing_tet(sv)
    plate = BodyAssembly("plate", col, EmbeddingMesh(ev, et), STIFF)
    floor = _identity_box("floor", (0.6, 0.6, 0.04), (0.0, 0.0, -0.02), static=True)
    params = ct.ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.3)
    system = System([plate, floor], params, GRAVITY)
    q = system.q_rest.copy()
    state = SimState(q=q, qdot=np.zeros_like(q), x=system.embed_all(q))
    cfg = SolverConfig(h=0.01)
    rest = col.vertices
    A = np.hstack([rest, np.ones((rest.shape[0], 1))])
    worst = 0.0
    for _ in range(10):
        state, _ = step(system, state, cfg)
        xs = state.x[: rest.shape[0]].copy()
        if corrupted:
            xs[0] += 1e-6
        coef, *_ = np.linalg.lstsq(A, xs, rcond=None)
        worst = max(worst, float(np.max(np.linalg.norm(A @ coef - xs, axis=1))))
    return worst


def _check_incline_statics(corrupted):
    """20 degree incline at mu = 0.5 must hold: slide below 1 mm over 0.5 s."""
    from scipy.spatial.transform import Rotation

    th = np.deg2rad(20.0)
    R = Rotation.from_rotvec([0.0, th, 0.0]).as_matrix()
    n = np.array([np.sin(th), 0.0, np.cos(th)])
    downhill = np.array([np.cos(th), 0.0, -np.sin(th)])

    sv, st = box_surface((0.04, 0.04, 0.04), divisions=1)
    # start just inside the barrier layer, near the equilibrium gap, so the
    # block settles without a bounce transient
    center = n * (0.01 + 9.2e-4 + 0.02)
    col = CollisionMesh(sv @ R.T + center, st)
    emb = EmbeddingMesh(col.vertices, delaunay_tets(col.vertices))
    block = BodyAssembly("block", col, emb, STIFF)

    pv, pt = box_surface((1.2, 0.3, 0.02), divisions=1)
    pcol = CollisionMesh(pv @ R.T, pt)
    pemb = EmbeddingMesh(pcol.vertices, delaunay_tets(pcol.vertices))
    plane = BodyAssembly(
        "plane", pcol, pemb, STIFF, np.arange(pemb.n_vertices), lambda t: (np.eye(3), np.zeros(3), np.zeros(3))
    )
    params = ct.ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.5)
    system = System([block, plane], params, GRAVITY)
    q = system.q_rest.copy()
    state = SimState(q=q, qdot=np.zeros_like(q), x=system.embed_all(q))
    cfg = SolverConfig(h=0.005, tol_v=1e-5)
    start = state.x[:8].mean(axis=0)
    for _ in range(100):
        state, _ = step(system, state, cfg)
    slide = float(np.dot(state.x[:8].mean(axis=0) - start, downhill))
    if corrupted:
        slide += 1e-3
    return abs(slide)


CHECKS = [
    ("fd_elastic_corotational", 1e-6),
    ("fd_elastic_orthogonality", 1e-6),
    ("fd_barrier_gradient", 1e-6),
    ("fd_friction_gradient", 1e-5),
    ("distance_pt_oracle", 1e-6),
    ("distance_ee_oracle", 1e-6),
    ("barrier_closed_form", 1e-12),
    ("accd_head_on", 1e-9),
    ("identity_equivalence", 1e-12),
    ("affine_reachability", 1e-9),
    ("incline_statics_20deg", 6e-4),
]


def run_suite(seed=0, corrupt=()):
    """Run every verification check; returns a list of CheckResult."""
    corrupt = set(corrupt)
    rng = np.random.default_rng(seed)
    results = []
    runners = {
        "fd_elastic_corotational": lambda c: _check_fd_elastic(MODEL_COROTATIONAL, rng, c),
        "fd_elastic_orthogonality": lambda c: _check_fd_elastic(MODEL_ORTHOGONALITY, rng, c),
        "fd_barrier_gradient": lambda c: _check_fd_barrier(rng, c),
        "fd_friction_gradient": lambda c: _check_fd_friction(rng, c),
        "distance_pt_oracle": lambda c: _check_distance_oracle("pt", rng, c),
        "distance_ee_oracle": lambda c: _check_distance_oracle("ee", rng, c),
        "barrier_closed_form": _check_barrier_values,
        "accd_head_on": _check_accd,
        "identity_equivalence": _check_identity_equivalence,
        "affine_reachability": _check_affine_reachability,
        "incline_statics_20deg": _check_incline_statics,
    }
    for name, threshold in CHECKS:
        measured = float(runners[name](name in corrupt))
        results.append(CheckResult(name, measured <= threshold, measured, threshold))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  {'status':6}  {'measured':>12}  {'threshold':>10}"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(width)}  {status:6}  {r.measured:12.3e}  {r.threshold:10.1e}")
    return "\n".join(lines)
