"""Procedural mesh generators for scenes, demos, and tests.

Everything here is deterministic: vertex order depends only on the
arguments, never on hashing or RNG state.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import Delaunay

from .errors import EngineError

# Freudenthal 6-tet decomposition of the unit cube, compatible across cells.
_CUBE_TETS = np.array(
    [
        [0, 1, 3, 7],
        [0, 1, 7, 5],
        [0, 5, 7, 4],
        [0, 3, 2, 7],
        [0, 2, 6, 7],
        [0, 6, 4, 7],
    ],
    dtype=np.int64,
)


def _weld(vertices, decimals=9):
    """Merge duplicate vertices; first occurrence wins, order preserved."""
    key = np.round(np.asarray(vertices, dtype=np.float64), decimals)
    seen = {}
    remap = np.empty(len(key), dtype=np.int64)
    out = []
    for i, k in enumerate(map(tuple, key)):
        if k in seen:
            remap[i] = seen[k]
        else:
            seen[k] = len(out)
            remap[i] = len(out)
            out.append(vertices[i])
    return np.asarray(out, dtype=np.float64), remap


def box_surface(extents, divisions=1, center=(0.0, 0.0, 0.0)):
    """Triangulated axis-aligned box surface with welded vertices.

    ``divisions`` is the number of quads along each edge of every face.
    """
    ex = np.asarray(extents, dtype=np.float64) / 2.0
    c = np.asarray(center, dtype=np.float64)
    n = int(divisions)
    verts = []
    tris = []
    # each face: (axis held fixed at +-1, u axis, v axis); winding outward
    faces = [
        (0, +1, 1, 2),
        (0, -1, 2, 1),
        (1, +1, 2, 0),
        (1, -1, 0, 2),
        (2, +1, 0, 1),
        (2, -1, 1, 0),
    ]
    for axis, sign, ua, va in faces:
        base = len(verts)
        lin = np.linspace(-1.0, 1.0, n + 1)
        for iv in range(n + 1):
            for iu in range(n + 1):
                p = np.zeros(3)
                p[axis] = sign
                p[ua] = lin[iu]
                p[va] = lin[iv]
                verts.append(p)
        for iv in range(n):
            for iu in range(n):
                a = base + iv * (n + 1) + iu
                b = a + 1
                d = a + (n + 1)
                e = d + 1
                tris.append([a, b, e])
                tris.append([a, e, d])
    verts = np.asarray(verts) * ex + c
    verts, remap = _weld(verts)
    tris = remap[np.asarray(tris, dtype=np.int64)]
    return verts, tris


def box_tets(extents, divisions=(1, 1, 1), center=(0.0, 0.0, 0.0)):
    """Tet grid filling an axis-aligned box (Freudenthal decomposition)."""
    ex = np.asarray(extents, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    nx, ny, nz = (int(d) for d in divisions)
    xs = np.linspace(-0.5, 0.5, nx + 1) * ex[0] + c[0]
    ys = np.linspace(-0.5, 0.5, ny + 1) * ex[1] + c[1]
    zs = np.linspace(-0.5, 0.5, nz + 1) * ex[2] + c[2]
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    verts = np.c_[gx.ravel(), gy.ravel(), gz.ravel()]

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corner = [
                    vid(i, j, k),
                    vid(i + 1, j, k),
                    vid(i, j + 1, k),
                    vid(i + 1, j + 1, k),
                    vid(i, j, k + 1),
                    vid(i + 1, j, k + 1),
                    vid(i, j + 1, k + 1),
                    vid(i + 1, j + 1, k + 1),
                ]
                for t in _CUBE_TETS:
                    tets.append([corner[t[0]], corner[t[1]], corner[t[2]], corner[t[3]]])
    return verts, np.asarray(tets, dtype=np.int64)


def uv_sphere(radius, n_lat=12, n_lon=16, center=(0.0, 0.0, 0.0)):
    """UV sphere with pole fans; n_lat interior rings, n_lon segments."""
    c = np.asarray(center, dtype=np.float64)
    verts = [np.array([0.0, 0.0, radius]) + c]
    for i in range(1, n_lat + 1):
        th = np.pi * i / (n_lat + 1)
        for j in range(n_lon):
            ph = 2.0 * np.pi * j / n_lon
            verts.append(
                c
                + radius
                * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
            )
    verts.append(np.array([0.0, 0.0, -radius]) + c)
    verts = np.asarray(verts)
    south = len(verts) - 1

    def ring(i, j):
        return 1 + i * n_lon + (j % n_lon)

    tris = []
    for j in range(n_lon):
        tris.append([0, ring(0, j), ring(0, j + 1)])
    for i in range(n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            d, e = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append([a, d, e])
            tris.append([a, e, b])
    for j in range(n_lon):
        tris.append([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)])
    return verts, np.asarray(tris, dtype=np.int64)


def enclosing_tet(points, margin_frac=0.05):
    """A single tet that encloses ``points`` with a per-axis margin.

    The construction is anisotropic, so thin geometry gets a thin tet and
    the tet volume stays proportional to the bounding-box volume.
    """
    p = np.asarray(points, dtype=np.float64)
    lo = p.min(axis=0)
    hi = p.max(axis=0)
    size = hi - lo
    m = np.maximum(margin_frac * np.max(size), 1e-6)
    lo = lo - m
    s = size + 2.0 * m
    v0 = lo
    verts = np.array(
        [
            v0,
            v0 + [3.0 * s[0], 0.0, 0.0],
            v0 + [0.0, 3.0 * s[1], 0.0],
            v0 + [0.0, 0.0, 3.0 * s[2]],
        ]
    )
    return verts, np.array([[0, 1, 2, 3]], dtype=np.int64)


def delaunay_tets(points):
    """Tetrahedralize the convex hull of ``points`` using every input point.

    Used for identity embeddings: the embedding vertex array *is* the
    surface vertex array, so every point must survive triangulation.
    """
    p = np.asarray(points, dtype=np.float64)
    tri = Delaunay(p)
    tets = np.asarray(tri.simplices, dtype=np.int64)
    vols = np.linalg.det((p[tets][:, 1:] - p[tets][:, :1]).transpose(0, 2, 1)) / 6.0
    tets = tets[np.abs(vols) > 1e-14]
    used = np.zeros(len(p), dtype=bool)
    used[tets.ravel()] = True
    if not used.all():
        missing = np.flatnonzero(~used)
        raise EngineError(
            f"identity embedding failed: {missing.size} surface vertices "
            f"(e.g. {missing[:5].tolist()}) dropped by the tetrahedralizer"
        )
    return tets
