import numpy as np
import pytest
from numpy.testing import assert_allclose

import scenes
from embersim.contact import ContactParams
from embersim.mesh import bind, jacobian
from embersim.reduction import (
    MODE_FULLSPACE,
    SimState,
    StepContext,
    System,
    incremental_potential,
    make_context,
    reduced_grad,
    reduced_hess,
)


def make_state(system):
    q = system.q_rest.copy()
    return SimState(q=q, qdot=np.zeros_like(q), x=system.embed_all(q))


class TestIncrementalPotential:
    def test_zero_at_predictor_without_forces(self):
        system = scenes.free_box_system(gravity=np.zeros(3))
        state = make_state(system)
        ctx = make_context(system, state, h=0.01)
        assert incremental_potential(system, state.q, ctx) == pytest.approx(0.0, abs=1e-12)

    def test_free_mass_minimizer_is_backward_euler(self):
        system = scenes.free_box_system()
        state = make_state(system)
        h = 0.01
        ctx = make_context(system, state, h)
        g = np.array([0.0, 0.0, -9.81])
        q_exact = state.q + h * state.qdot + h * h * g
        grad = reduced_grad(system, q_exact, ctx)
        assert np.max(np.abs(grad)) <= 1e-10

    def test_gradient_matches_finite_differences(self):
        system = scenes.box_on_floor_system(gap=4e-4, mu=0.3)
        state = make_state(system)
        h = 0.01
        ctx = make_context(system, state, h)
        rng = np.random.default_rng(0)
        q = state.q + 1e-5 * rng.normal(size=state.q.shape)
        grad = reduced_grad(system, q, ctx)
        free = system.free_dofs
        eps = 1e-8
        g_fd = np.zeros_like(grad)
        for i in np.flatnonzero(free):
            qp = q.copy().ravel()
            qp[i] += eps
            qm = q.copy().ravel()
            qm[i] -= eps
            ep = incremental_potential(system, qp.reshape(-1, 3), ctx)
            em = incremental_potential(system, qm.reshape(-1, 3), ctx)
            g_fd[i] = (ep - em) / (2 * eps)
        num = np.max(np.abs(grad[free] - g_fd[free]))
        den = max(np.max(np.abs(g_fd[free])), 1e-30)
        assert num / den <= 1e-6

    def test_hessian_symmetric(self):
        system = scenes.box_on_floor_system(gap=4e-4, mu=0.3)
        state = make_state(system)
        ctx = make_context(system, state, h=0.01)
        H = reduced_hess(system, state.q, ctx)
        asym = (H - H.T).toarray()
        assert np.max(np.abs(asym)) <= 1e-12 * max(1.0, np.max(np.abs(H.toarray())))

    def test_pullback_matvec_matches_composition(self):
        # J^T H J v must equal embedding -> x-space H -> pullback, matrix free
        system = scenes.box_on_floor_system(gap=4e-4, mu=0.0)
        state = make_state(system)
        ctx = make_context(system, state, h=0.01)
        from embersim.contact import barrier_energy_grad_hess
        import scipy.sparse as sp

        x = system.embed_all(state.q)
        cset = system.collect(x)
        _, _, blocks, verts = barrier_energy_grad_hess(x, cset, system.params)
        nx = 3 * system.n_surf
        dofs = (3 * verts[:, :, None] + np.arange(3)).reshape(-1, 12)
        r = np.repeat(dofs, 12, axis=1).ravel()
        c = np.tile(dofs, (1, 12)).ravel()
        hx = sp.coo_matrix((blocks.ravel(), (r, c)), shape=(nx, nx)).tocsr()
        hq = (system.jac.T @ hx @ system.jac).tocsr()
        rng = np.random.default_rng(1)
        for _ in range(10):
            v = rng.normal(size=3 * system.n_emb)
            lhs = hq @ v
            rhs = system.jac.T @ (hx @ (system.jac @ v))
            assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))

    def test_bound_vertex_force_distribution(self):
        body = scenes.single_tet_box_body("b", (0.1, 0.1, 0.1), (0.0, 0.0, 0.0))
        J = jacobian(body.binding, body.emb.n_vertices)
        f = np.zeros((body.col.n_vertices, 3))
        f[0] = [1.0, 2.0, 3.0]
        fq = (J.T @ f.ravel()).reshape(-1, 3)
        w = body.binding.weights[0]
        for j, corner in enumerate(body.binding.corners[0]):
            assert_allclose(fq[corner], w[j] * f[0], atol=1e-12)


class TestIdentityEquivalence:
    def _systems(self):
        contact = ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.4)
        def build(mode):
            box = scenes.identity_box_body("box", (0.1, 0.1, 0.1), (0.0, 0.0, 0.05 + 4e-4))
            floor = scenes.identity_box_body(
                "floor", (0.6, 0.6, 0.04), (0.0, 0.0, -0.02), scenes.STIFF, static=True
            )
            return System([box, floor], contact, scenes.GRAVITY, mode=mode)

        return build("general"), build(MODE_FULLSPACE)

    def test_assemblies_agree(self):
        sys_g, sys_f = self._systems()
        state = make_state(sys_g)
        rng = np.random.default_rng(2)
        h = 0.01
        ctx_g = make_context(sys_g, state, h)
        ctx_f = make_context(sys_f, state, h)
        for _ in range(5):
            q = state.q + 2e-4 * rng.normal(size=state.q.shape)
            ev_g = sys_g.eval(q, ctx_g, order=2)
            ev_f = sys_f.eval(q, ctx_f, order=2)
            scale = max(abs(ev_g.energy), 1e-30)
            assert abs(ev_g.energy - ev_f.energy) <= 1e-12 * scale
            gs = max(np.max(np.abs(ev_g.grad)), 1e-30)
            assert np.max(np.abs(ev_g.grad - ev_f.grad)) <= 1e-12 * gs
            dh = (ev_g.hess - ev_f.hess).toarray()
            hs = max(np.max(np.abs(ev_g.hess.toarray())), 1e-30)
            assert np.max(np.abs(dh)) <= 1e-12 * hs


class TestAffineSpecialCase:
    def test_single_tet_surface_stays_affine(self):
        from embersim.solver import SolverConfig, step

        contact = ContactParams(kappa=1e4, dhat=1e-3, epsv=1e-3, mu=0.3)
        body = scenes.single_tet_box_body("plate", (0.1, 0.1, 0.02), (0.0, 0.0, 0.01 + 5e-4), scenes.STIFF)
        floor = scenes.identity_box_body("floor", (0.6, 0.6, 0.04), (0.0, 0.0, -0.02), scenes.STIFF, static=True)
        system = System([body, floor], contact, scenes.GRAVITY)
        state = make_state(system)
        cfg = SolverConfig(h=0.01)
        rest = body.col.vertices
        ones = np.ones((rest.shape[0], 1))
        A = np.hstack([rest, ones])
        for _ in range(25):
            state, _ = step(system, state, cfg)
            xs = state.x[: rest.shape[0]]
            coef, res, *_ = np.linalg.lstsq(A, xs, rcond=None)
            fit = A @ coef
            assert np.max(np.linalg.norm(fit - xs, axis=1)) <= 1e-9
