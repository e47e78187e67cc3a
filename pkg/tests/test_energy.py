import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from embersim.energy import (
    Material,
    MODEL_COROTATIONAL,
    MODEL_ORTHOGONALITY,
    TetEnergyModel,
    deformation_gradient,
    gravity_energy,
    polar_decompose,
    psi_corotational,
    psi_orthogonality,
    pullback_force,
)
from embersim.errors import DegenerateTet
from embersim.mesh import CollisionMesh, EmbeddingMesh, bind, jacobian
from embersim.meshgen import box_surface, box_tets

UNIT_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    return Rotation.from_rotvec(rng.normal(size=3)).as_matrix()


class TestDeformationGradient:
    def test_rest_is_identity(self):
        F = deformation_gradient(UNIT_TET, UNIT_TET)
        assert_allclose(F, np.eye(3), atol=1e-12)

    def test_uniform_scaling(self):
        F = deformation_gradient(UNIT_TET, 2.0 * UNIT_TET)
        assert_allclose(F, 2.0 * np.eye(3), atol=1e-12)

    def test_affine_map_reproduced(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            A = rng.normal(size=(3, 3))
            b = rng.normal(size=3)
            F = deformation_gradient(UNIT_TET, UNIT_TET @ A.T + b)
            assert_allclose(F, A, atol=1e-10)

    def test_degenerate_rest_raises(self):
        flat = UNIT_TET.copy()
        flat[3] = [0.5, 0.5, 0.0]
        with pytest.raises(DegenerateTet):
            deformation_gradient(flat, flat)


class TestCorotational:
    def test_zero_at_identity(self):
        assert psi_corotational(np.eye(3), 1e4, 0.45) == pytest.approx(0.0, abs=1e-12)

    def test_zero_on_rotations(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            R = random_rotation(rng)
            assert abs(psi_corotational(R, 1e4, 0.45)) <= 1e-10

    def test_uniaxial_stretch_value(self):
        # closed form: diagonal F has R = I, so
        # psi = mu (2-1)^2 + lam/2 tr(diag(1,0,0))^2
        young, nu = 1e4, 0.45
        mu = young / (2 * (1 + nu))
        lam = young * nu / ((1 + nu) * (1 - 2 * nu))
        assert mu == pytest.approx(3448.2759, abs=1e-4)
        assert lam == pytest.approx(31034.4828, abs=1e-4)
        expected = mu * 1.0 + 0.5 * lam * 1.0
        got = psi_corotational(np.diag([2.0, 1.0, 1.0]), young, nu)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(18965.517, abs=5e-3)

    def test_polar_handles_inversion(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            F = rng.normal(size=(3, 3))
            R, S = polar_decompose(F)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
            assert_allclose(R @ S, F, atol=1e-10)
            assert np.isfinite(psi_corotational(F, 1e4, 0.3))


class TestOrthogonality:
    def test_zero_on_rotations(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            assert abs(psi_orthogonality(random_rotation(rng), 1.0)) <= 1e-10

    def test_stretch_value(self):
        # F F^T - I = diag(3,0,0), squared Frobenius norm 9
        assert psi_orthogonality(np.diag([2.0, 1.0, 1.0]), 1.0) == pytest.approx(9.0, rel=1e-12)

    def test_reflection_is_zero(self):
        assert psi_orthogonality(-np.eye(3), 1.0) == pytest.approx(0.0, abs=1e-12)


def fd_gradient(fn, q, eps):
    g = np.zeros_like(q)
    for i in range(q.shape[0]):
        for d in range(3):
            qp = q.copy()
            qp[i, d] += eps
            qm = q.copy()
            qm[i, d] -= eps
            g[i, d] = (fn(qp) - fn(qm)) / (2 * eps)
    return g


def _random_state(emb, rng, scale=0.1):
    return emb.vertices + scale * rng.normal(size=emb.vertices.shape)


@pytest.mark.parametrize(
    "material",
    [
        Material(MODEL_COROTATIONAL, 1000.0, young=1e4, poisson=0.45),
        Material(MODEL_ORTHOGONALITY, 1000.0, kappa=2.5e3),
    ],
    ids=["corotational", "orthogonality"],
)
class TestTetModel:
    def _model(self, material):
        ev, et = box_tets((1.0, 1.0, 1.0), (1, 1, 1))
        emb = EmbeddingMesh(ev, et)
        return emb, TetEnergyModel(emb, material)

    def test_rest_energy_and_gradient_vanish(self, material):
        emb, model = self._model(material)
        assert model.energy(emb.vertices) == pytest.approx(0.0, abs=1e-9)
        assert np.max(np.abs(model.gradient(emb.vertices))) <= 1e-9

    def test_translation_invariance(self, material):
        emb, model = self._model(material)
        rng = np.random.default_rng(4)
        q = _random_state(emb, rng)
        e0 = model.energy(q)
        e1 = model.energy(q + np.array([0.4, -1.2, 0.7]))
        assert e1 == pytest.approx(e0, rel=1e-10)

    def test_energy_matches_per_tet_sum(self, material):
        emb, model = self._model(material)
        rng = np.random.default_rng(5)
        q = _random_state(emb, rng)
        # oracle: independent per-tet closed-form evaluation, summed
        total = 0.0
        for t, vol in zip(emb.tets, emb.rest_volumes):
            F = deformation_gradient(emb.vertices[t], q[t])
            if material.model == MODEL_COROTATIONAL:
                total += psi_corotational(F, material.young, material.poisson) * vol
            else:
                total += psi_orthogonality(F, material.kappa) * vol
        assert model.energy(q) == pytest.approx(total, rel=1e-10)

    def test_gradient_matches_finite_differences(self, material):
        emb, model = self._model(material)
        rng = np.random.default_rng(6)
        for _ in range(10):
            q = _random_state(emb, rng)
            g = model.gradient(q)
            g_fd = fd_gradient(model.energy, q, 1e-6)
            err = np.max(np.abs(g - g_fd)) / max(np.max(np.abs(g_fd)), 1e-30)
            assert err <= 1e-6

    def test_projected_hessian_psd(self, material):
        emb, model = self._model(material)
        rng = np.random.default_rng(7)
        for _ in range(100):
            q = _random_state(emb, rng, scale=0.3)
            blocks = model.hessian_blocks(q)
            w = np.linalg.eigvalsh(blocks)
            assert w.min() >= -1e-10


class TestGravity:
    def test_zero_gravity(self):
        e, f = gravity_energy(np.ones((5, 3)), np.ones(5), np.zeros(3))
        assert e == 0.0
        assert np.all(f == 0.0)

    def test_single_mass_force(self):
        g = np.array([0.0, 0.0, -9.81])
        e, f = gravity_energy(np.array([[0.0, 0.0, 2.0]]), np.array([1.0]), g)
        assert_allclose(f[0], [0.0, 0.0, -9.81])
        assert e == pytest.approx(2.0 * 9.81)

    def test_collision_vertex_force_pullback(self):
        emb = EmbeddingMesh(UNIT_TET, [[0, 1, 2, 3]])
        col = CollisionMesh(np.array([[0.25, 0.25, 0.25]]), np.empty((0, 3), np.int64))
        b = bind(col, emb)
        J = jacobian(b, 4)
        f = np.array([[1.0, -2.0, 3.0]])
        fq = pullback_force(J, f)
        for j in range(4):
            assert_allclose(fq[j], 0.25 * f[0], atol=1e-12)
