"""Multi-body reduced system: energy aggregation and J-pullback assembly.

All bodies' embedding vertices are concatenated into one coordinate
vector q; the collision surfaces concatenate into x = J q with a constant
block-diagonal sparse J. Contact quantities live in x-space and are
pulled back with J^T (gradients) and J^T H J (Hessians); elasticity,
inertia, and gravity are native in q-space. Scripted DoFs are eliminated
from the unknowns, which keeps the reduced Hessian SPD without penalties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import contact as ct
from .energy import TetEnergyModel, gravity_energy
from .mesh import bind, embed, jacobian, lump_masses, unique_edges

MODE_GENERAL = "general"
MODE_FULLSPACE = "fullspace"


@dataclass
class SimState:
    """Reduced coordinates with cached embedded surface positions."""

    q: np.ndarray  # (Ns,3)
    qdot: np.ndarray  # (Ns,3)
    x: np.ndarray  # (Nv,3) = embed(q)
    step_index: int = 0
    time: float = 0.0

    def copy(self):
        return SimState(self.q.copy(), self.qdot.copy(), self.x.copy(), self.step_index, self.time)


class BodyAssembly:
    """One body's meshes, binding, material model, and scripted selection."""

    def __init__(self, name, col, emb, material, scripted_verts=None, motion=None):
        self.name = name
        self.col = col
        self.emb = emb
        self.material = material
        self.binding = bind(col, emb)
        self.elastic = TetEnergyModel(emb, material)
        self.mass = lump_masses(emb, material.density)
        self.scripted_verts = (
            np.asarray(scripted_verts, dtype=np.int64) if scripted_verts is not None else None
        )
        self.motion = motion  # callable t -> (R (3,3), pivot (3,), translation (3,)) or None

    @property
    def is_scripted(self):
        return self.scripted_verts is not None and self.scripted_verts.size > 0

    @property
    def fully_scripted(self):
        return self.is_scripted and self.scripted_verts.size == self.emb.n_vertices


class System:
    """Assembled multi-body scene ready for time stepping."""

    def __init__(self, bodies, params: ct.ContactParams, gravity, mode=MODE_GENERAL):
        self.bodies = list(bodies)
        self.params = params
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.mode = mode

        self.q_offsets = []
        self.x_offsets = []
        nq = nx = 0
        for b in self.bodies:
            self.q_offsets.append(nq)
            self.x_offsets.append(nx)
            nq += b.emb.n_vertices
            nx += b.col.n_vertices
        self.n_emb = nq
        self.n_surf = nx

        tris = []
        edges = []
        vert_body = np.empty(nx, dtype=np.int64)
        fixed_surf = np.zeros(nx, dtype=bool)
        self.fixed_verts = np.zeros(nq, dtype=bool)
        jac_blocks = []
        for i, b in enumerate(self.bodies):
            xo, qo = self.x_offsets[i], self.q_offsets[i]
            tris.append(b.col.triangles + xo)
            edges.append(b.col.edges + xo)
            vert_body[xo : xo + b.col.n_vertices] = i
            jac_blocks.append(jacobian(b.binding, b.emb.n_vertices))
            if b.is_scripted:
                self.fixed_verts[qo + b.scripted_verts] = True
                if b.fully_scripted:
                    fixed_surf[xo : xo + b.col.n_vertices] = True
                else:
                    # a surface vertex is fixed only if all its tet corners are
                    fx = b.binding.corners
                    fixed_surf[xo : xo + b.col.n_vertices] = np.isin(fx, b.scripted_verts).all(axis=1)
        self.topology = ct.SurfaceTopology(
            np.vstack(tris), np.vstack(edges), vert_body, fixed_surf
        )
        self.jac = sp.block_diag(jac_blocks, format="csr")
        masses = np.concatenate([b.mass.vertex_mass for b in self.bodies])
        self.vertex_mass = masses
        self.mass_dof = np.repeat(masses, 3)
        self.free_dofs = np.repeat(~self.fixed_verts, 3)

        if mode == MODE_FULLSPACE:
            for b in self.bodies:
                if not b.binding.is_identity:
                    raise ValueError("fullspace mode requires identity bindings for every body")
            # q index of each surface vertex (x and q coincide up to this map)
            self.surf_to_emb = np.concatenate(
                [b.binding.identity_map() + self.q_offsets[i] for i, b in enumerate(self.bodies)]
            )

        # prebuilt elastic Hessian scatter indices per body: (T,12) dof ids
        self._elastic_dofs = []
        for i, b in enumerate(self.bodies):
            corners = b.elastic.tets + self.q_offsets[i]
            dofs = (3 * corners[:, :, None] + np.arange(3)).reshape(-1, 12)
            self._elastic_dofs.append(dofs)

        self.q_rest = np.vstack([b.emb.vertices for b in self.bodies])

    # -- geometry ---------------------------------------------------------

    def body_q(self, q, i):
        o = self.q_offsets[i]
        return q[o : o + self.bodies[i].emb.n_vertices]

    def embed_all(self, q):
        """x = J q evaluated per body (exactly J @ q, but allocation friendly)."""
        out = np.empty((self.n_surf, 3))
        for i, b in enumerate(self.bodies):
            xo = self.x_offsets[i]
            out[xo : xo + b.col.n_vertices] = embed(b.binding, self.body_q(q, i))
        return out

    def scripted_targets(self, t):
        """Global embedding vertex ids and positions prescribed at time t."""
        ids = []
        pos = []
        for i, b in enumerate(self.bodies):
            if not b.is_scripted:
                continue
            qo = self.q_offsets[i]
            rest = b.emb.vertices[b.scripted_verts]
            R, pivot, trans = b.motion(t)
            p = (rest - pivot) @ R.T + pivot + trans
            ids.append(b.scripted_verts + qo)
            pos.append(p)
        if not ids:
            return np.empty(0, dtype=np.int64), np.empty((0, 3))
        return np.concatenate(ids), np.vstack(pos)

    # -- energies ---------------------------------------------------------

    def collect(self, x, margin=0.0):
        return ct.collect_pairs(x, self.topology, self.params.dhat, margin=margin)

    def energy_candidates(self, q, ctx, cands):
        """E_IPC(q) with the barrier evaluated over a fixed candidate superset.

        ``cands`` must contain every pair that can fall below dhat at q
        (line-search probes pass a margin-inflated collection); pairs at or
        beyond dhat contribute exactly zero, so the value equals eval(q).
        """
        h2 = ctx.h * ctx.h
        x = self.embed_all(q)
        diff = (q - ctx.q_tilde).ravel()
        diff = np.where(self.free_dofs, diff, 0.0)
        e = 0.5 * float(np.dot(diff, self.mass_dof * diff))
        e_grav, _ = gravity_energy(q, self.vertex_mass, self.gravity)
        e_pot = self.elastic_energy(q) + e_grav
        if cands.pt_idx.shape[0]:
            idx = cands.pt_idx
            d2, _, _ = ct.point_triangle_distance(x[idx[:, 0]], x[idx[:, 1]], x[idx[:, 2]], x[idx[:, 3]])
            e_pot += self.params.kappa * float(np.sum(ct.barrier(np.sqrt(d2), self.params.dhat)))
        if cands.ee_idx.shape[0]:
            idx = cands.ee_idx
            d2, _, _, _ = ct.edge_edge_distance(x[idx[:, 0]], x[idx[:, 1]], x[idx[:, 2]], x[idx[:, 3]])
            e_pot += self.params.kappa * float(np.sum(ct.barrier(np.sqrt(d2), self.params.dhat)))
        if ctx.friction:
            e_pot += ct.friction_energy_grad_hess(x, ctx.x_prev, ctx.friction, self.params, ctx.h, order=0)
        return e + h2 * e_pot

    def elastic_energy(self, q):
        total = 0.0
        for i, b in enumerate(self.bodies):
            if b.fully_scripted:
                continue
            total += b.elastic.energy(self.body_q(q, i))
        return total

    def eval(self, q, ctx, order=2):
        """Incremental potential E_IPC(q) with optional derivatives.

        ctx carries the step data (h, q_tilde, x_prev, friction data).
        Returns an EvalResult; grad is (3Ns,) flat, hess a CSR over all
        DoFs (free-DoF slicing happens in the solver).
        """
        h2 = ctx.h * ctx.h
        x = self.embed_all(q)
        cset = self.collect(x)

        diff = (q - ctx.q_tilde).ravel()
        diff = np.where(self.free_dofs, diff, 0.0)
        e_inertia = 0.5 * float(np.dot(diff, self.mass_dof * diff))

        e_gravity, f_gravity = gravity_energy(q, self.vertex_mass, self.gravity)

        e_elastic = 0.0
        e_barrier = 0.0
        e_friction = 0.0
        grad = None
        hess = None

        if order == 0:
            e_elastic = self.elastic_energy(q)
            e_barrier = ct.barrier_energy(x, cset, self.params)
            if ctx.friction:
                e_friction = ct.friction_energy_grad_hess(
                    x, ctx.x_prev, ctx.friction, self.params, ctx.h, order=0
                )
        else:
            grad_q = np.zeros_like(q)
            elastic_blocks = []
            for i, b in enumerate(self.bodies):
                if b.fully_scripted:
                    continue
                qo = self.q_offsets[i]
                nb = b.emb.n_vertices
                e_b, g_b = b.elastic.energy_gradient(self.body_q(q, i))
                e_elastic += e_b
                grad_q[qo : qo + nb] += g_b
                if order >= 2:
                    elastic_blocks.append((i, b.elastic.hessian_blocks(self.body_q(q, i))))

            e_barrier, grad_x, bblocks, bverts = ct.barrier_energy_grad_hess(x, cset, self.params)
            if ctx.friction:
                e_friction, grad_fx, fblocks, fverts = ct.friction_energy_grad_hess(
                    x, ctx.x_prev, ctx.friction, self.params, ctx.h, order=order
                )
                grad_x = grad_x + grad_fx
                cblocks = np.concatenate([bblocks, fblocks]) if fblocks.size else bblocks
                cverts = np.concatenate([bverts, fverts]) if fverts.size else bverts
            else:
                cblocks, cverts = bblocks, bverts

            grad = self.mass_dof * diff + h2 * (grad_q.ravel() - f_gravity.ravel())
            grad = grad + h2 * self._pullback_grad(grad_x)

            if order >= 2:
                hess = self._assemble_hessian(elastic_blocks, cblocks, cverts, h2)

        total = e_inertia + h2 * (e_elastic + e_gravity + e_barrier + e_friction)
        return EvalResult(
            energy=total,
            inertia=e_inertia,
            elastic=e_elastic,
            gravity=e_gravity,
            barrier=e_barrier,
            friction=e_friction,
            grad=grad,
            hess=hess,
            x=x,
            pairs=cset,
        )

    def _pullback_grad(self, grad_x):
        if self.mode == MODE_FULLSPACE:
            out = np.zeros(3 * self.n_emb)
            flat = (3 * self.surf_to_emb[:, None] + np.arange(3)).ravel()
            np.add.at(out, flat, grad_x.ravel())
            return out
        return self.jac.T @ grad_x.ravel()

    def _assemble_hessian(self, elastic_blocks, cblocks, cverts, h2):
        n = 3 * self.n_emb
        mats = [sp.diags(self.mass_dof, format="csr")]
        # elastic part, native in q
        rows, cols, vals = [], [], []
        for i, blocks in elastic_blocks:
            dofs = self._elastic_dofs[i]
            rows.append(np.repeat(dofs, 12, axis=1).ravel())
            cols.append(np.tile(dofs, (1, 12)).ravel())
            vals.append(blocks.ravel() * h2)
        if rows:
            mats.append(
                sp.coo_matrix(
                    (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                    shape=(n, n),
                ).tocsr()
            )
        # contact part, pulled back from x-space
        if cblocks.shape[0]:
            dofs_x = (3 * cverts[:, :, None] + np.arange(3)).reshape(-1, 12)
            r = np.repeat(dofs_x, 12, axis=1).ravel()
            c = np.tile(dofs_x, (1, 12)).ravel()
            if self.mode == MODE_FULLSPACE:
                # x and q DoFs coincide through surf_to_emb
                conv = (3 * self.surf_to_emb[:, None] + np.arange(3)).ravel()
                hx = sp.coo_matrix((cblocks.ravel() * h2, (conv[r], conv[c])), shape=(n, n)).tocsr()
                mats.append(hx)
            else:
                nx = 3 * self.n_surf
                hx = sp.coo_matrix((cblocks.ravel() * h2, (r, c)), shape=(nx, nx)).tocsr()
                mats.append((self.jac.T @ hx @ self.jac).tocsr())
        out = mats[0]
        for m in mats[1:]:
            out = out + m
        return out.tocsr()


@dataclass
class EvalResult:
    energy: float
    inertia: float
    elastic: float
    gravity: float
    barrier: float
    friction: float
    grad: np.ndarray | None
    hess: sp.csr_matrix | None
    x: np.ndarray
    pairs: ct.ContactSet


@dataclass
class StepContext:
    """Quantities frozen over one backward-Euler step."""

    h: float
    q_n: np.ndarray
    qdot_n: np.ndarray
    q_tilde: np.ndarray
    x_prev: np.ndarray
    friction: list = field(default_factory=list)


def incremental_potential(system: System, q, ctx: StepContext) -> float:
    """E_IPC(q) = inertia + h^2 (elastic + external + barrier + friction)."""
    return system.eval(q, ctx, order=0).energy


def reduced_grad(system: System, q, ctx: StepContext) -> np.ndarray:
    """Assembled gradient of the incremental potential in q (flat, 3Ns)."""
    return system.eval(q, ctx, order=1).grad


def reduced_hess(system: System, q, ctx: StepContext) -> sp.csr_matrix:
    """Assembled SPD reduced Hessian M + h^2 (H_elastic + J^T H_contact J)."""
    return system.eval(q, ctx, order=2).hess


def make_context(system: System, state: SimState, h: float) -> StepContext:
    """Step context at state: predictor, lagged friction frames and forces."""
    x_n = system.embed_all(state.q)
    pairs = system.collect(x_n)
    friction = (
        ct.friction_precompute(x_n, pairs, system.params, h) if system.params.mu > 0.0 else []
    )
    q_tilde = state.q + h * state.qdot
    return StepContext(h=h, q_n=state.q.copy(), qdot_n=state.qdot.copy(), q_tilde=q_tilde, x_prev=x_n, friction=friction)
