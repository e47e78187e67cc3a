"""Elastic energy densities on embedding tets and their derivatives.

Two constitutive models are provided:

* linear corotational elasticity, Psi = mu ||F - R||_F^2
  + (lambda/2) tr^2(R^T F - I) with R from the polar decomposition;
* an orthogonality potential Psi = kappa ||F F^T - I||_F^2 that renders a
  single-tet body a stiff affine body.

Per-tet Hessians are projected to PSD by clamping negative eigenvalues of
d^2Psi/dF^2 to zero; the congruence with the constant dF/dx map keeps the
assembled 12x12 blocks PSD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTet

MODEL_COROTATIONAL = "corotational"
MODEL_ORTHOGONALITY = "affine-orthogonality"


@dataclass(frozen=True)
class Material:
    model: str
    density: float
    young: float = 0.0
    poisson: float = 0.0
    kappa: float = 0.0  # orthogonality stiffness, Pa

    def __post_init__(self):
        if self.model not in (MODEL_COROTATIONAL, MODEL_ORTHOGONALITY):
            raise ValueError(f"unknown material model {self.model!r}")
        if self.density <= 0.0:
            raise ValueError("density must be positive")
        if self.model == MODEL_COROTATIONAL:
            if self.young <= 0.0:
                raise ValueError("Young's modulus must be positive")
            if not (0.0 <= self.poisson < 0.5):
                raise ValueError("Poisson's ratio must lie in [0, 0.5)")
        else:
            if self.kappa <= 0.0:
                raise ValueError("orthogonality stiffness must be positive")

    def lame(self):
        mu = self.young / (2.0 * (1.0 + self.poisson))
        lam = self.young * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
        return mu, lam


def polar_decompose(F):
    """Batched polar decomposition F = R S with R in SO(3).

    The smallest singular value's sign is flipped when det F < 0, so R
    stays a proper rotation and the energy remains smooth for inverted
    elements probed by the line search.
    """
    F = np.asarray(F, dtype=np.float64)
    U, sig, Vt = np.linalg.svd(F)
    det = np.linalg.det(U @ Vt)
    L = np.zeros_like(F)
    L[..., 0, 0] = 1.0
    L[..., 1, 1] = 1.0
    L[..., 2, 2] = det
    R = U @ L @ Vt
    sig = sig.copy()
    sig[..., 2] *= det
    S = np.einsum("...ji,...j,...jk->...ik", Vt, sig, Vt)
    return R, S


def deformation_gradient(rest_verts, cur_verts):
    """F = D (D0)^-1 from a tet's rest and current vertex positions."""
    rest = np.asarray(rest_verts, dtype=np.float64)
    cur = np.asarray(cur_verts, dtype=np.float64)
    d0 = np.column_stack([rest[1] - rest[0], rest[2] - rest[0], rest[3] - rest[0]])
    if abs(np.linalg.det(d0)) < 6.0 * 1e-14:
        raise DegenerateTet("rest tet is degenerate")
    d = np.column_stack([cur[1] - cur[0], cur[2] - cur[0], cur[3] - cur[0]])
    return d @ np.linalg.inv(d0)


# ---------------------------------------------------------------------------
# corotational model


def corotational_psi(F, mu, lam):
    R, S = polar_decompose(F)
    dev = np.asarray(F) - R
    tr = S[..., 0, 0] + S[..., 1, 1] + S[..., 2, 2] - 3.0
    return np.einsum("...ij,...ij->...", dev, dev) * mu + 0.5 * lam * tr * tr


def corotational_pk1(F, mu, lam):
    R, S = polar_decompose(F)
    tr = S[..., 0, 0] + S[..., 1, 1] + S[..., 2, 2] - 3.0
    return 2.0 * mu * (np.asarray(F) - R) + lam * tr[..., None, None] * R


def _rotation_differentials(R, S, dF):
    """dR for a batch of direction matrices dF at fixed (R, S).

    Solves (tr(S) I - S) w = vee(R^T dF - dF^T R), dR = R [w]x.
    """
    trS = S[..., 0, 0] + S[..., 1, 1] + S[..., 2, 2]
    G = trS[..., None, None] * np.eye(3) - S
    # regularize near-degenerate stretches so the solve stays bounded
    G = G + 1e-10 * np.maximum(1.0, np.abs(trS))[..., None, None] * np.eye(3)
    A = np.einsum("...ji,...jk->...ik", R, dF)
    A = A - np.swapaxes(A, -1, -2)
    vee = np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)
    w = np.linalg.solve(G, vee[..., None])[..., 0]
    wx = np.zeros_like(dF)
    wx[..., 0, 1] = -w[..., 2]
    wx[..., 0, 2] = w[..., 1]
    wx[..., 1, 0] = w[..., 2]
    wx[..., 1, 2] = -w[..., 0]
    wx[..., 2, 0] = -w[..., 1]
    wx[..., 2, 1] = w[..., 0]
    return R @ wx


def corotational_dpdf(F, mu, lam):
    """Batched 9x9 dP/dF (row-major F flattening)."""
    F = np.asarray(F, dtype=np.float64)
    R, S = polar_decompose(F)
    tr = S[..., 0, 0] + S[..., 1, 1] + S[..., 2, 2] - 3.0
    out = np.empty(F.shape[:-2] + (9, 9))
    for k in range(9):
        dF = np.zeros_like(F)
        dF[..., k // 3, k % 3] = 1.0
        dR = _rotation_differentials(R, S, dF)
        dtr = np.einsum("...ij,...ij->...", dR, F) + np.einsum("...ij,...ij->...", R, dF)
        dP = (
            2.0 * mu * (dF - dR)
            + lam * dtr[..., None, None] * R
            + lam * tr[..., None, None] * dR
        )
        out[..., k] = dP.reshape(F.shape[:-2] + (9,))
    return out


# ---------------------------------------------------------------------------
# orthogonality model


def orthogonality_psi(F, kappa):
    F = np.asarray(F, dtype=np.float64)
    A = F @ np.swapaxes(F, -1, -2) - np.eye(3)
    return kappa * np.einsum("...ij,...ij->...", A, A)


def orthogonality_pk1(F, kappa):
    F = np.asarray(F, dtype=np.float64)
    A = F @ np.swapaxes(F, -1, -2) - np.eye(3)
    return 4.0 * kappa * A @ F


def orthogonality_dpdf(F, kappa):
    F = np.asarray(F, dtype=np.float64)
    A = F @ np.swapaxes(F, -1, -2) - np.eye(3)
    out = np.empty(F.shape[:-2] + (9, 9))
    Ft = np.swapaxes(F, -1, -2)
    for k in range(9):
        dF = np.zeros_like(F)
        dF[..., k // 3, k % 3] = 1.0
        dA = dF @ Ft + F @ np.swapaxes(dF, -1, -2)
        dP = 4.0 * kappa * (dA @ F + A @ dF)
        out[..., k] = dP.reshape(F.shape[:-2] + (9,))
    return out


# spec-facing scalar energy densities


def psi_corotational(F, young, poisson):
    """Corotational energy density (Pa) from engineering constants."""
    mu = young / (2.0 * (1.0 + poisson))
    lam = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    return float(corotational_psi(np.asarray(F, dtype=np.float64), mu, lam))


def psi_orthogonality(F, kappa):
    """Orthogonality energy density kappa ||F F^T - I||_F^2 (Pa)."""
    return float(orthogonality_psi(F, kappa))


def project_psd(blocks, floor=0.0):
    """Clamp negative eigenvalues of a batch of symmetric matrices to ``floor``."""
    blocks = 0.5 * (blocks + np.swapaxes(blocks, -1, -2))
    w, V = np.linalg.eigh(blocks)
    w = np.maximum(w, floor)
    return np.einsum("...ij,...j,...kj->...ik", V, w, V)


class TetEnergyModel:
    """Elastic energy, gradient, and projected Hessian blocks for one body.

    dF/dx is constant per tet, so it is prebuilt as a (T,9,12) map G with
    vec(dF) = G dx for the stacked corner displacements (corner 0 first).
    """

    def __init__(self, emb, material: Material):
        self.material = material
        self.tets = emb.tets
        self.volumes = emb.rest_volumes
        tv = emb.vertices[self.tets]
        d0 = np.stack([tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0], tv[:, 3] - tv[:, 0]], axis=-1)
        self.binv = np.linalg.inv(d0)  # (T,3,3)
        T = self.tets.shape[0]
        G = np.zeros((T, 9, 12))
        B = self.binv
        for r in range(3):
            for c in range(3):
                row = 3 * r + c
                for m in range(3):
                    G[:, row, 3 * (m + 1) + r] = B[:, m, c]
                G[:, row, r] = -B[:, :, c].sum(axis=1)
        self.dfdx = G

    def deformation_gradients(self, q):
        """Batched F = D B for current embedding positions q (N,3)."""
        tv = q[self.tets]
        d = np.stack([tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0], tv[:, 3] - tv[:, 0]], axis=-1)
        return d @ self.binv

    def _psi(self, F):
        m = self.material
        if m.model == MODEL_COROTATIONAL:
            return corotational_psi(F, *m.lame())
        return orthogonality_psi(F, m.kappa)

    def _pk1(self, F):
        m = self.material
        if m.model == MODEL_COROTATIONAL:
            return corotational_pk1(F, *m.lame())
        return orthogonality_pk1(F, m.kappa)

    def _dpdf(self, F):
        m = self.material
        if m.model == MODEL_COROTATIONAL:
            return corotational_dpdf(F, *m.lame())
        return orthogonality_dpdf(F, m.kappa)

    def energy(self, q):
        F = self.deformation_gradients(q)
        return float(np.dot(self._psi(F), self.volumes))

    def gradient(self, q):
        """Energy gradient wrt embedding vertex positions, shape (N,3)."""
        F = self.deformation_gradients(q)
        P = self._pk1(F)
        g12 = np.einsum("tri,tr->ti", self.dfdx, P.reshape(-1, 9)) * self.volumes[:, None]
        out = np.zeros_like(q)
        np.add.at(out.reshape(-1), (3 * self.tets[:, :, None] + np.arange(3)).reshape(-1), g12.ravel())
        return out

    def hessian_blocks(self, q):
        """PSD-projected per-tet 12x12 Hessian blocks (corner order of self.tets)."""
        F = self.deformation_gradients(q)
        A = self._dpdf(F)
        A = project_psd(A)
        H = np.einsum("tri,trs,tsj->tij", self.dfdx, A, self.dfdx) * self.volumes[:, None, None]
        return H

    def energy_gradient(self, q):
        F = self.deformation_gradients(q)
        P = self._pk1(F)
        e = float(np.dot(self._psi(F), self.volumes))
        g12 = np.einsum("tri,tr->ti", self.dfdx, P.reshape(-1, 9)) * self.volumes[:, None]
        out = np.zeros_like(q)
        np.add.at(out.reshape(-1), (3 * self.tets[:, :, None] + np.arange(3)).reshape(-1), g12.ravel())
        return e, out


def gravity_energy(q, vertex_mass, g):
    """Gravity potential -sum_i m_i g.q_i and the generalized force m_i g."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    g = np.asarray(g, dtype=np.float64)
    m = np.asarray(vertex_mass, dtype=np.float64)
    energy = -float(np.dot(m, q @ g))
    force = m[:, None] * g[None, :]
    return energy, force


def pullback_force(jac, f_full):
    """Generalized force J^T f for a force defined at collision vertices."""
    return (jac.T @ np.asarray(f_full, dtype=np.float64).ravel()).reshape(-1, 3)
