"""Exact triangle-triangle intersection tests (the feasibility auditor).

This is deliberately independent of the distance code: it implements the
Moller interval test with a coplanar fallback, and is used to audit every
accepted frame for the intersection-free guarantee.
"""

from __future__ import annotations

import numpy as np

from .broadphase import aabbs, cell_pairs


def _project_coplanar(tri, axis):
    keep = [i for i in range(3) if i != axis]
    return tri[:, keep]


def _seg_seg_2d(p1, q1, p2, q2):
    d1 = q1 - p1
    d2 = q2 - p2
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    r = p2 - p1
    if denom == 0.0:
        # parallel: overlap only if collinear and ranges intersect
        if d1[0] * r[1] - d1[1] * r[0] != 0.0:
            return False
        ll = np.dot(d1, d1)
        if ll == 0.0:
            return False
        t0 = np.dot(r, d1) / ll
        t1 = t0 + np.dot(d2, d1) / ll
        lo, hi = min(t0, t1), max(t0, t1)
        return hi >= 0.0 and lo <= 1.0
    s = (r[0] * d2[1] - r[1] * d2[0]) / denom
    t = (r[0] * d1[1] - r[1] * d1[0]) / denom
    return 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0


def _point_in_tri_2d(p, tri):
    a, b, c = tri
    s1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    s2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
    s3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
    return (s1 >= 0 and s2 >= 0 and s3 >= 0) or (s1 <= 0 and s2 <= 0 and s3 <= 0)


def _coplanar_overlap(t1, t2, n):
    axis = int(np.argmax(np.abs(n)))
    a = _project_coplanar(t1, axis)
    b = _project_coplanar(t2, axis)
    for i in range(3):
        for j in range(3):
            if _seg_seg_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]):
                return True
    return _point_in_tri_2d(a[0], b) or _point_in_tri_2d(b[0], a)


def _interval(tri, d, proj):
    """Intersection-line parameter interval for one triangle (Moller).

    The apex vertex sits alone on its side of the other plane; it is the
    one whose opposite pair has the largest signed-distance product, which
    stays correct when vertices lie exactly on the plane.
    """
    prods = (d[1] * d[2], d[2] * d[0], d[0] * d[1])
    a = max(range(3), key=lambda i: (prods[i], abs(d[i])))
    b, c = (a + 1) % 3, (a + 2) % 3
    pa, pb, pc = proj[a], proj[b], proj[c]
    da, db, dc = d[a], d[b], d[c]
    t1 = pa + (pb - pa) * da / (da - db) if da != db else pa
    t2 = pa + (pc - pa) * da / (da - dc) if da != dc else pa
    return min(t1, t2), max(t1, t2)


def tri_tri_intersects(t1, t2, eps=0.0):
    """True if the two triangles properly intersect (touch counts)."""
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    d1 = (t1 - t2[0]) @ n2
    if np.all(d1 > eps) or np.all(d1 < -eps):
        return False
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    d2 = (t2 - t1[0]) @ n1
    if np.all(d2 > eps) or np.all(d2 < -eps):
        return False
    if np.all(np.abs(d1) <= eps) and np.all(np.abs(d2) <= eps):
        return _coplanar_overlap(t1, t2, n1)
    line = np.cross(n1, n2)
    axis = int(np.argmax(np.abs(line)))
    i1 = _interval(t1, d1, t1[:, axis])
    i2 = _interval(t2, d2, t2[:, axis])
    return i1[0] <= i2[1] and i2[0] <= i1[1]


def audit_intersections(x, topo):
    """All intersecting triangle pairs (broad-phase filtered, exact test).

    Triangle pairs sharing a vertex are skipped; an intersection-free
    configuration returns an empty list.
    """
    tris = topo.triangles
    boxes = aabbs(x[tris])
    ia, ib = cell_pairs(boxes, 1e-12)
    if ia.size == 0:
        return []
    # exact AABB overlap before the exact triangle test
    overlap = np.all(boxes[ia, 0] <= boxes[ib, 1], axis=1) & np.all(
        boxes[ia, 1] >= boxes[ib, 0], axis=1
    )
    ia, ib = ia[overlap], ib[overlap]
    share = (
        (tris[ia, 0:1] == tris[ib]).any(axis=1)
        | (tris[ia, 1:2] == tris[ib]).any(axis=1)
        | (tris[ia, 2:3] == tris[ib]).any(axis=1)
    )
    ia, ib = ia[~share], ib[~share]
    if ia.size == 0:
        return []
    # vectorized plane-side rejection; the exact test runs on survivors only
    ta = x[tris[ia]]
    tb = x[tris[ib]]
    nb = np.cross(tb[:, 1] - tb[:, 0], tb[:, 2] - tb[:, 0])
    da = np.einsum("pvd,pd->pv", ta - tb[:, 0:1], nb)
    na = np.cross(ta[:, 1] - ta[:, 0], ta[:, 2] - ta[:, 0])
    db = np.einsum("pvd,pd->pv", tb - ta[:, 0:1], na)
    sep = np.all(da > 0.0, axis=1) | np.all(da < 0.0, axis=1)
    sep |= np.all(db > 0.0, axis=1) | np.all(db < 0.0, axis=1)
    ia, ib = ia[~sep], ib[~sep]
    hits = []
    for tid, oid in zip(ia, ib):
        if tri_tri_intersects(x[tris[tid]], x[tris[oid]]):
            hits.append((int(tid), int(oid)))
    return hits
