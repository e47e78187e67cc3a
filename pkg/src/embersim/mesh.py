"""Geometry containers and the coarse-to-surface embedding map.

A body carries two meshes: a high-resolution triangle surface on which
contact is resolved, and a coarse tetrahedral embedding mesh whose vertex
positions are the simulated coordinates. Each surface vertex is bound to
one embedding tet through barycentric weights, which makes the surface a
fixed linear function of the embedding coordinates.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateTet, DegenerateTriangle, UnboundVertex

DEGENERATE_VOLUME = 1e-14
DEGENERATE_AREA = 1e-16
BIND_TOLERANCE = 1e-6  # meters a vertex may sit outside its best tet


def rest_tet_volume(p0, p1, p2, p3):
    """Signed tetrahedron volume det(D0)/6.

    Raises DegenerateTet when |volume| falls below 1e-14 m^3.
    """
    d = np.column_stack([np.subtract(p1, p0), np.subtract(p2, p0), np.subtract(p3, p0)])
    vol = float(np.linalg.det(d)) / 6.0
    if abs(vol) < DEGENERATE_VOLUME:
        raise DegenerateTet(f"tet volume {vol:.3e} m^3 below {DEGENERATE_VOLUME:.0e}")
    return vol


def signed_tet_volumes(vertices, tets):
    """Vectorized signed volumes for an array of tets."""
    tv = vertices[tets]
    e = tv[:, 1:] - tv[:, :1]
    return np.linalg.det(e.transpose(0, 2, 1)) / 6.0


def unique_edges(triangles):
    """Each undirected edge exactly once, sorted lexicographically."""
    e = np.vstack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


class CollisionMesh:
    """High-resolution triangle surface carrying the contact primitives."""

    def __init__(self, vertices, triangles):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        n = self.vertices.shape[0]
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= n):
            raise IndexError("triangle index out of range")
        tv = self.vertices[self.triangles]
        areas = 0.5 * np.linalg.norm(
            np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]), axis=1
        )
        if np.any(areas <= DEGENERATE_AREA):
            bad = int(np.argmin(areas))
            raise DegenerateTriangle(f"triangle {bad} has rest area {areas[bad]:.3e}")
        self.edges = unique_edges(self.triangles)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def transformed(self, rotation=None, translation=None):
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return CollisionMesh(v, self.triangles)


class EmbeddingMesh:
    """Coarse tetrahedral mesh; its vertex positions are the reduced coordinates.

    Inverted input tets are re-oriented to positive volume (the flipped
    ones are recorded in ``reoriented``) so that downstream deformation
    gradients can assume det(D0) > 0.
    """

    def __init__(self, vertices, tets):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        tets = np.ascontiguousarray(tets, dtype=np.int64).reshape(-1, 4)
        n = self.vertices.shape[0]
        if tets.size and (tets.min() < 0 or tets.max() >= n):
            raise IndexError("tet index out of range")
        vols = signed_tet_volumes(self.vertices, tets)
        self.reoriented = vols < 0
        tets = tets.copy()
        tets[self.reoriented] = tets[self.reoriented][:, [0, 1, 3, 2]]
        vols = np.abs(vols)
        if np.any(vols < DEGENERATE_VOLUME):
            bad = int(np.argmin(vols))
            raise DegenerateTet(f"tet {bad} has rest volume {vols[bad]:.3e} m^3")
        self.tets = tets
        self.rest_volumes = vols

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def transformed(self, rotation=None, translation=None):
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return EmbeddingMesh(v, self.tets)


class Binding:
    """Per-collision-vertex tet index and barycentric weights."""

    def __init__(self, tet_index, weights, corners):
        self.tet_index = np.asarray(tet_index, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.corners = np.asarray(corners, dtype=np.int64)  # emb vertex ids, (K,4)

    @property
    def n_bound(self):
        return self.tet_index.shape[0]

    @property
    def is_identity(self):
        """True when every vertex maps to a single embedding vertex with weight 1."""
        w = self.weights
        ones = np.isclose(w.max(axis=1), 1.0, rtol=0.0, atol=0.0)
        return bool(np.all(ones) and np.all(np.count_nonzero(w, axis=1) == 1))

    def identity_map(self):
        """Embedding vertex index carried by each collision vertex (identity bindings)."""
        return self.corners[np.arange(self.n_bound), np.argmax(self.weights, axis=1)]


class MassModel:
    """Lumped embedding-vertex masses and the block-diagonal reduced mass matrix."""

    def __init__(self, vertex_mass):
        self.vertex_mass = np.asarray(vertex_mass, dtype=np.float64)

    @property
    def total_mass(self):
        return float(self.vertex_mass.sum())

    def dof_diagonal(self):
        """Diagonal of M^q, one entry per scalar DoF."""
        return np.repeat(self.vertex_mass, 3)

    def matrix(self):
        return sp.diags(self.dof_diagonal(), format="csr")


def lump_masses(emb: EmbeddingMesh, density: float) -> MassModel:
    """Quarter each tet's rest mass onto its four corners."""
    m = np.zeros(emb.n_vertices)
    np.add.at(m, emb.tets.ravel(), np.repeat(density * emb.rest_volumes / 4.0, 4))
    return MassModel(m)


def _barycentric_all(points, emb, chunk=512):
    """Barycentric weights of every point wrt every tet, chunked over points.

    Returns (weights (K,T,4), altitudes (T,4)) where altitudes convert a
    negative weight into a Euclidean distance outside that face.
    """
    tv = emb.vertices[emb.tets]  # (T,4,3)
    cols = np.stack([tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0], tv[:, 3] - tv[:, 0]], axis=-1)
    binv = np.linalg.inv(cols)  # (T,3,3)
    # altitude of corner j over the opposite face: 3 V / area_opposite
    areas = np.empty((emb.tets.shape[0], 4))
    for j, (a, b, c) in enumerate([(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]):
        areas[:, j] = 0.5 * np.linalg.norm(
            np.cross(tv[:, b] - tv[:, a], tv[:, c] - tv[:, a]), axis=1
        )
    alt = 3.0 * emb.rest_volumes[:, None] / np.maximum(areas, 1e-300)
    weights = np.empty((points.shape[0], emb.tets.shape[0], 4))
    for lo in range(0, points.shape[0], chunk):
        hi = min(lo + chunk, points.shape[0])
        r = points[lo:hi, None, :] - tv[None, :, 0, :]
        w123 = np.einsum("tij,ktj->kti", binv, r)
        weights[lo:hi, :, 1:] = w123
        weights[lo:hi, :, 0] = 1.0 - w123.sum(axis=2)
    return weights, alt


def bind(col: CollisionMesh, emb: EmbeddingMesh, tol: float = BIND_TOLERANCE) -> Binding:
    """Bind every collision vertex to a containing embedding tet.

    Tets are searched exhaustively (load-time only); ties are broken by
    the smallest barycentric deficit. Vertices may sit outside their best
    tet by at most ``tol`` meters, otherwise UnboundVertex is raised.
    """
    weights, alt = _barycentric_all(col.vertices, emb)
    minw = weights.min(axis=2)  # (K,T)
    best = np.argmax(minw, axis=1)  # (K,)
    k_idx = np.arange(col.n_vertices)
    w = weights[k_idx, best]  # (K,4)
    # convert weight deficits to Euclidean distance outside the tet
    outside = np.maximum(0.0, -w) * alt[best]
    dist_out = outside.max(axis=1)
    if np.any(dist_out > tol):
        bad = int(np.argmax(dist_out))
        raise UnboundVertex(bad, float(dist_out[bad]))
    # snap near-exact weights so identity bindings are exact 0/1 rows
    w = np.where(np.abs(w) < 1e-12, 0.0, w)
    w = np.where(np.abs(w - 1.0) < 1e-12, 1.0, w)
    w /= w.sum(axis=1, keepdims=True)
    return Binding(best, w, emb.tets[best])


def embed(binding: Binding, q) -> np.ndarray:
    """Surface positions from embedding positions: x_k = sum_j w_kj q_{c_kj}."""
    q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
    return np.einsum("kj,kjd->kd", binding.weights, q[binding.corners])


def jacobian(binding: Binding, n_embedding_vertices: int) -> sp.csr_matrix:
    """Sparse embedding Jacobian J with embed(q) = J q (3K x 3N)."""
    k = binding.n_bound
    rows = np.repeat(3 * np.arange(k), 12) + np.tile(np.arange(3), 4 * k)
    cols = (3 * binding.corners[:, :, None] + np.arange(3)[None, None, :]).reshape(k, 12)
    cols = cols.ravel()
    vals = np.repeat(binding.weights.ravel(), 3)
    j = sp.coo_matrix((vals, (rows, cols)), shape=(3 * k, 3 * n_embedding_vertices))
    j = j.tocsr()
    j.eliminate_zeros()
    return j
