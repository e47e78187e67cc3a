"""Scene description, scripted kinematics, the simulation loop, and logging.

Scenes are single JSON documents with top-level keys ``bodies``,
``contact``, ``solver``, ``gravity`` and ``duration``. Unknown keys are a
hard error: silent typos in physics configs are the classic footgun.
Units are SI throughout (m, s, kg, Pa, N).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import contact as ct
from . import formats, meshgen
from .errors import EngineError, InitialIntersection, MissingSample, ParseError
from .energy import MODEL_COROTATIONAL, MODEL_ORTHOGONALITY, Material
from .intersection import audit_intersections
from .mesh import CollisionMesh, EmbeddingMesh
from .reduction import MODE_FULLSPACE, MODE_GENERAL, BodyAssembly, SimState, System, make_context
from .solver import SolverConfig, StepStats, step

_TOP_KEYS = {"bodies", "contact", "solver", "gravity", "duration"}
_BODY_KEYS = {"name", "surface", "embedding", "material", "pose", "scripted"}
_MATERIAL_KEYS = {"model", "density", "young", "poisson", "kappa"}
_CONTACT_KEYS = {"kappa", "dhat", "epsv", "mu"}
_SOLVER_KEYS = {"h", "tol_v", "max_newton", "beta", "c1", "ccd_slack", "ccd_conservative"}
_POSE_KEYS = {"translation", "rotation"}
_KEYFRAME_KEYS = {"t", "translation", "rotation"}
_SCRIPTED_KEYS = {"vertices", "keyframes"}


@dataclass
class ScriptedMotion:
    """Piecewise-linear keyframed motion of a set of embedding vertices.

    Keyframe translations/rotations are deltas relative to the posed rest
    configuration; rotations (rotation vectors, radians) act about the
    scripted set's rest centroid.
    """

    vertices: object  # "all" or explicit index list
    times: np.ndarray
    translations: np.ndarray  # (K,3)
    rotations: np.ndarray  # (K,3) rotation vectors

    def sample(self, t):
        times = self.times
        t = min(max(t, times[0]), times[-1])
        k = int(np.searchsorted(times, t, side="right") - 1)
        k = min(k, len(times) - 2)
        t0, t1 = times[k], times[k + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        trans = (1.0 - w) * self.translations[k] + w * self.translations[k + 1]
        rot = (1.0 - w) * self.rotations[k] + w * self.rotations[k + 1]
        return Rotation.from_rotvec(rot).as_matrix(), trans


@dataclass
class BodySpec:
    name: str
    surface: str
    embedding: object  # path string, "identity", or "single-tet"
    material: Material
    rotation: np.ndarray
    translation: np.ndarray
    scripted: ScriptedMotion | None = None


@dataclass
class Scene:
    bodies: list
    contact: ct.ContactParams
    solver: SolverConfig
    gravity: np.ndarray
    duration: float
    system: System = None
    specs: list = field(default_factory=list)

    def n_steps(self):
        return int(math.floor(self.duration / self.solver.h + 1e-9))


def _require_keys(d, allowed, required, where, path):
    unknown = set(d) - allowed
    if unknown:
        raise ParseError(path, f"{where}: unknown key(s) {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ParseError(path, f"{where}: missing key(s) {sorted(missing)}")


def _parse_material(d, where, path):
    _require_keys(d, _MATERIAL_KEYS, {"model", "density"}, where, path)
    model = d["model"]
    if model == "corotational":
        _require_keys(d, _MATERIAL_KEYS, {"model", "density", "young", "poisson"}, where, path)
        return Material(MODEL_COROTATIONAL, float(d["density"]), float(d["young"]), float(d["poisson"]))
    if model in ("affine", "affine-orthogonality"):
        _require_keys(d, _MATERIAL_KEYS, {"model", "density", "kappa"}, where, path)
        return Material(MODEL_ORTHOGONALITY, float(d["density"]), kappa=float(d["kappa"]))
    raise ParseError(path, f"{where}: unknown material model {model!r}")


def _parse_scripted(d, duration, where, path):
    if d == "static":
        times = np.array([0.0, duration])
        zeros = np.zeros((2, 3))
        return ScriptedMotion("all", times, zeros, zeros.copy())
    _require_keys(d, _SCRIPTED_KEYS, {"vertices", "keyframes"}, where, path)
    kfs = d["keyframes"]
    if not kfs:
        raise ParseError(path, f"{where}: empty keyframe list")
    times, trans, rots = [], [], []
    for i, kf in enumerate(kfs):
        _require_keys(kf, _KEYFRAME_KEYS, {"t", "translation"}, f"{where}.keyframes[{i}]", path)
        times.append(float(kf["t"]))
        trans.append(np.asarray(kf["translation"], dtype=np.float64))
        rots.append(np.asarray(kf.get("rotation", (0.0, 0.0, 0.0)), dtype=np.float64))
    times = np.asarray(times)
    if np.any(np.diff(times) <= 0.0):
        raise ParseError(path, f"{where}: keyframe times must be strictly increasing")
    if times[0] > 1e-12 or times[-1] < duration - 1e-9:
        raise ParseError(path, f"{where}: keyframes must cover [0, {duration}]")
    verts = d["vertices"]
    if verts != "all":
        verts = [int(v) for v in verts]
    return ScriptedMotion(verts, times, np.vstack(trans), np.vstack(rots))


def load_scene(path):
    """Parse and assemble a scene file; audits initial feasibility."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc}") from exc
    return build_scene(data, base_dir=os.path.dirname(os.path.abspath(path)), path=path)


def build_scene(data, base_dir=".", path="<scene>", mode=MODE_GENERAL):
    _require_keys(data, _TOP_KEYS, _TOP_KEYS, "scene", path)
    duration = float(data["duration"])
    if duration <= 0.0:
        raise ParseError(path, "duration must be positive")
    gravity = np.asarray(data["gravity"], dtype=np.float64)
    if gravity.shape != (3,):
        raise ParseError(path, "gravity must be a 3-vector")

    cd = data["contact"]
    _require_keys(cd, _CONTACT_KEYS, _CONTACT_KEYS, "contact", path)
    params = ct.ContactParams(float(cd["kappa"]), float(cd["dhat"]), float(cd["epsv"]), float(cd["mu"]))

    sd = data["solver"]
    _require_keys(sd, _SOLVER_KEYS, {"h"}, "solver", path)
    solver = SolverConfig(**{k: float(v) if k != "max_newton" else int(v) for k, v in sd.items()})

    if not data["bodies"]:
        raise ParseError(path, "scene needs at least one body")
    specs = []
    for i, bd in enumerate(data["bodies"]):
        where = f"bodies[{i}]"
        _require_keys(bd, _BODY_KEYS, {"name", "surface", "embedding", "material"}, where, path)
        material = _parse_material(bd["material"], f"{where}.material", path)
        pose = bd.get("pose", {})
        _require_keys(pose, _POSE_KEYS, set(), f"{where}.pose", path)
        rot = np.asarray(pose.get("rotation", (0.0, 0.0, 0.0)), dtype=np.float64)
        tra = np.asarray(pose.get("translation", (0.0, 0.0, 0.0)), dtype=np.float64)
        scripted = None
        if "scripted" in bd:
            scripted = _parse_scripted(bd["scripted"], duration, f"{where}.scripted", path)
        specs.append(BodySpec(bd["name"], bd["surface"], bd["embedding"], material, rot, tra, scripted))

    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ParseError(path, "body names must be unique")

    bodies = [_build_body(s, base_dir, path) for s in specs]
    system = System(bodies, params, gravity, mode=mode)
    scene = Scene(bodies, params, solver, gravity, duration, system=system, specs=specs)
    _audit_initial(scene)
    return scene


def _build_body(spec: BodySpec, base_dir, path):
    surf_path = os.path.join(base_dir, spec.surface)
    if not os.path.exists(surf_path):
        raise ParseError(path, f"surface mesh not found: {surf_path}")
    sv, st = formats.load_obj(surf_path)
    R = Rotation.from_rotvec(spec.rotation).as_matrix()
    col = CollisionMesh(sv, st).transformed(R, spec.translation)

    if spec.embedding == "identity":
        tets = meshgen.delaunay_tets(col.vertices)
        emb = EmbeddingMesh(col.vertices, tets)
    elif spec.embedding == "single-tet":
        ev, et = meshgen.enclosing_tet(col.vertices)
        emb = EmbeddingMesh(ev, et)
    else:
        emb_path = os.path.join(base_dir, str(spec.embedding))
        if not os.path.exists(emb_path):
            raise ParseError(path, f"embedding mesh not found: {emb_path}")
        ev, et = formats.load_tet(emb_path)
        emb = EmbeddingMesh(ev, et).transformed(R, spec.translation)

    scripted_verts = None
    motion = None
    if spec.scripted is not None:
        if spec.scripted.vertices == "all":
            scripted_verts = np.arange(emb.n_vertices)
        else:
            scripted_verts = np.asarray(spec.scripted.vertices, dtype=np.int64)
            if scripted_verts.size and (scripted_verts.min() < 0 or scripted_verts.max() >= emb.n_vertices):
                raise ParseError(path, f"body {spec.name!r}: scripted vertex index out of range")
        pivot = emb.vertices[scripted_verts].mean(axis=0)
        sm = spec.scripted

        def motion(t, _sm=sm, _pivot=pivot):
            Rm, trans = _sm.sample(t)
            return Rm, _pivot, trans

    return BodyAssembly(spec.name, col, emb, spec.material, scripted_verts, motion)


def _audit_initial(scene: Scene):
    sys_ = scene.system
    x0 = sys_.embed_all(sys_.q_rest)
    bad = audit_intersections(x0, sys_.topology)
    if bad:
        raise InitialIntersection(bad[0])
    pairs = ct.collect_pairs(x0, sys_.topology, scene.contact.dhat, skip_fixed_pairs=False)
    if pairs.count and pairs.min_distance() <= 0.0:
        raise InitialIntersection(("touching", pairs.min_distance()))


# ---------------------------------------------------------------------------
# simulation loop and logging


@dataclass
class FrameRecord:
    t: float
    forces: dict  # (name_on, name_from) -> (3,) force + pair count
    stats: StepStats


class TrajectoryLog:
    """Per-step records plus optional dense position snapshots."""

    def __init__(self, h, body_names):
        self.h = h
        self.body_names = body_names
        self.frames: list[FrameRecord] = []
        self.positions: list[np.ndarray] = []

    @property
    def times(self):
        return np.array([f.t for f in self.frames])

    def total_descent_violations(self):
        return sum(f.stats.descent_violations for f in self.frames)

    def forces_rows(self):
        rows = []
        for f in self.frames:
            for (on, src), (vec, n) in sorted(f.forces.items()):
                rows.append((f.t, f"{on}|{src}", vec[0], vec[1], vec[2], n))
        return rows

    def stats_rows(self):
        return [
            (f.t, f.stats.newton_iters, f.stats.ls_trials, f.stats.min_dist, f.stats.wall_ms)
            for f in self.frames
        ]


def contact_force(x, cset, fric, params, vert_body, names, x_prev=None, h=None):
    """Per-body-pair contact forces: barrier plus lagged friction.

    Each pair's own gradient is split between its two sides, so forces are
    equal and opposite by construction and vertices shared by several
    pairs are never double counted. Returns
    {(name_on, name_from): (force (3,), active pair count)} with both
    orderings present; same-body (self-contact) pairs are skipped.
    """
    out = {}

    def add(row, split, force12, count):
        a_set = set(vert_body[row[:split]].tolist())
        b_set = set(vert_body[row[split:]].tolist())
        if len(a_set) != 1 or len(b_set) != 1:
            return
        a, b = a_set.pop(), b_set.pop()
        if a == b:
            return
        fa = force12[:split].sum(axis=0)
        fb = force12[split:].sum(axis=0)
        for key, f in (((names[a], names[b]), fa), ((names[b], names[a]), fb)):
            vec, n = out.get(key, (np.zeros(3), 0))
            out[key] = (vec + f, n + count)

    for idx, regions, batch_fn, split in (
        (cset.pt_idx, cset.pt_region, ct.pt_d2_grad_hess_batch, 1),
        (cset.ee_idx, cset.ee_region, ct.ee_d2_grad_hess_batch, 2),
    ):
        if idx.shape[0] == 0:
            continue
        d2, g12, _ = batch_fn(x[idx], regions)
        d = np.sqrt(d2)
        coef = params.kappa * ct.barrier_grad(d, params.dhat) / (2.0 * d)
        for i in np.flatnonzero(d < params.dhat):
            add(idx[i], split, -(coef[i] * g12[i]).reshape(4, 3), 1)
    if fric and x_prev is not None:
        for datum in fric:
            vi = datum.verts
            rel = np.einsum("i,id->d", datum.coeffs, x[vi] - x_prev[vi])
            u = datum.frame.T @ rel
            y = float(np.linalg.norm(u))
            k1 = ct.f1_over_y(y, params.epsv, h)
            grad_rel = params.mu * datum.lam * k1 * (datum.frame @ u)
            force12 = -np.outer(datum.coeffs, grad_rel)
            split = 1 if datum.kind == ct.KIND_PT else 2
            add(vi, split, force12, 0)
    return out


def run(scene: Scene, out_dir=None, write_frames=True, keep_positions=False, progress=None):
    """Execute floor(T/h) steps; logs forces/stats, audits every frame.

    Raises EngineError if any accepted frame fails the intersection audit
    (this would be an engine bug, not a scene problem).
    """
    sys_ = scene.system
    q0 = sys_.q_rest.copy()
    state = SimState(q=q0, qdot=np.zeros_like(q0), x=sys_.embed_all(q0), step_index=0, time=0.0)
    n_steps = scene.n_steps()
    log = TrajectoryLog(scene.solver.h, [b.name for b in sys_.bodies])
    names = [b.name for b in sys_.bodies]

    frames_dir = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if write_frames:
            frames_dir = os.path.join(out_dir, "frames")
            os.makedirs(frames_dir, exist_ok=True)

    for n in range(n_steps):
        ctx = make_context(sys_, state, scene.solver.h)
        state, stats = step(sys_, state, scene.solver, ctx=ctx)
        bad = audit_intersections(state.x, sys_.topology)
        if bad:
            raise EngineError(f"intersection audit failed at frame {n + 1}: pair {bad[0]}")
        pairs = sys_.collect(state.x)
        forces = contact_force(
            state.x, pairs, ctx.friction, scene.contact, sys_.topology.vert_body, names,
            x_prev=ctx.x_prev, h=scene.solver.h,
        )
        log.frames.append(FrameRecord(t=state.time, forces=forces, stats=stats))
        if keep_positions:
            log.positions.append(state.x.copy())
        if frames_dir is not None:
            _write_frame(frames_dir, n + 1, sys_, state.x)
        if progress is not None:
            progress(n + 1, n_steps)

    if out_dir is not None:
        write_forces_csv(os.path.join(out_dir, "forces.csv"), log)
        write_stats_csv(os.path.join(out_dir, "stats.csv"), log)
    return log


def _write_frame(frames_dir, idx, sys_, x):
    names = [b.name for b in sys_.bodies]
    formats.save_obj(
        os.path.join(frames_dir, f"frame_{idx:06d}.obj"),
        x,
        sys_.topology.triangles,
        object_names=names,
        offsets=sys_.x_offsets,
    )


def write_forces_csv(path, log: TrajectoryLog):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,pair,fx,fy,fz,n_pairs\n")
        for t, pair, fx, fy, fz, n in log.forces_rows():
            ff = formats.format_float
            fh.write(f"{ff(t)},{pair},{ff(fx)},{ff(fy)},{ff(fz)},{n}\n")


def write_stats_csv(path, log: TrajectoryLog):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,newton_iters,ls_trials,min_dist,wall_ms\n")
        for t, it, ls, md, wall in log.stats_rows():
            ff = formats.format_float
            fh.write(f"{ff(t)},{it},{ls},{ff(md)},{ff(wall)}\n")


def error_metric(traj: TrajectoryLog, ref: TrajectoryLog, h, duration):
    """Time-averaged, vertex-normalized RMS position discrepancy E(h).

    ``traj`` was run at step h; ``ref`` at a finer step that divides h.
    """
    if not traj.positions or not ref.positions:
        raise MissingSample("trajectories must be run with keep_positions=True")
    ratio = h / ref.h
    r = int(round(ratio))
    if abs(ratio - r) > 1e-6 or r < 1:
        raise MissingSample(f"reference step {ref.h} does not divide h={h}")
    n = int(math.floor(duration / h + 1e-9))
    acc = 0.0
    n_v = traj.positions[0].shape[0]
    for i in range(1, n + 1):
        ref_idx = i * r - 1
        if ref_idx >= len(ref.positions):
            raise MissingSample(f"reference lacks frame {ref_idx + 1}")
        diff = traj.positions[i - 1] - ref.positions[ref_idx]
        acc += float(np.sum(diff * diff)) / n_v
    return math.sqrt(acc / n)
