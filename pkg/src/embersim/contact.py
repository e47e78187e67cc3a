"""Proximity pairs, unsigned distances, barrier energy, and lagged friction.

Distances are classified into closest-feature regions (7 point-triangle
cases, 9 edge-edge cases). Derivatives are taken of the smooth primitive
formula selected by the region (point-point, point-line, point-plane,
line-line), which agrees in value and gradient with the piecewise distance
wherever that region is active. Energies are assembled on squared
distances internally; the barrier itself is a function of the true
distance so activation happens exactly at d < dhat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .broadphase import SpatialHash, aabbs, cell_pairs, inflate, pick_cell_size
from .errors import DegenerateEdge, DegenerateTriangle, NonpositiveDistance

# point-triangle region tags
PT_V0, PT_V1, PT_V2, PT_E01, PT_E12, PT_E02, PT_INT = range(7)
PT_REGION_NAMES = ("V0", "V1", "V2", "E01", "E12", "E02", "INT")

# edge-edge region code = 3*sa + sb where each side is 0 (param 0 endpoint),
# 1 (param 1 endpoint) or 2 (segment interior)
EE_REGION_NAMES = tuple(f"{a}-{b}" for a in ("A0", "A1", "AI") for b in ("B0", "B1", "BI"))
EE_INT = 8

KIND_PT = "point-triangle"
KIND_EE = "edge-edge"


@dataclass(frozen=True)
class ContactParams:
    kappa: float  # contact stiffness, kg s^-2
    dhat: float  # barrier activation distance, m
    epsv: float  # static-friction velocity threshold, m/s
    mu: float  # friction coefficient

    def __post_init__(self):
        if self.kappa <= 0.0 or self.dhat <= 0.0 or self.epsv <= 0.0:
            raise ValueError("kappa, dhat and epsv must be positive")
        if self.mu < 0.0:
            raise ValueError("friction coefficient must be nonnegative")


@dataclass(frozen=True)
class ContactPair:
    kind: str
    indices: tuple
    d: float
    region: int


class SurfaceTopology:
    """Global surface connectivity shared by contact, CCD, and the auditor."""

    def __init__(self, triangles, edges, vert_body, fixed_verts=None):
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.edges = np.asarray(edges, dtype=np.int64)
        self.vert_body = np.asarray(vert_body, dtype=np.int64)
        n = self.vert_body.shape[0]
        if fixed_verts is None:
            fixed_verts = np.zeros(n, dtype=bool)
        self.fixed_verts = np.asarray(fixed_verts, dtype=bool)

    @property
    def n_vertices(self):
        return self.vert_body.shape[0]


# ---------------------------------------------------------------------------
# distance classification (batched)


def point_triangle_distance(p, t0, t1, t2):
    """Squared distance, region tag, and closest-point barycentrics.

    Accepts single points (shape (3,)) or batches (N,3).
    """
    single = np.asarray(p).ndim == 1
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    t0 = np.atleast_2d(np.asarray(t0, dtype=np.float64))
    t1 = np.atleast_2d(np.asarray(t1, dtype=np.float64))
    t2 = np.atleast_2d(np.asarray(t2, dtype=np.float64))
    if single:
        area2 = np.linalg.norm(np.cross(t1[0] - t0[0], t2[0] - t0[0]))
        if area2 < 2.0 * 1e-16:
            raise DegenerateTriangle("triangle is degenerate")

    ab = t1 - t0
    ac = t2 - t0
    ap = p - t0
    d1 = np.einsum("nd,nd->n", ab, ap)
    d2_ = np.einsum("nd,nd->n", ac, ap)
    bp = p - t1
    d3 = np.einsum("nd,nd->n", ab, bp)
    d4 = np.einsum("nd,nd->n", ac, bp)
    cp = p - t2
    d5 = np.einsum("nd,nd->n", ab, cp)
    d6 = np.einsum("nd,nd->n", ac, cp)
    vc = d1 * d4 - d3 * d2_
    vb = d5 * d2_ - d1 * d6
    va = d3 * d6 - d5 * d4

    n = p.shape[0]
    region = np.full(n, PT_INT, dtype=np.int64)
    bary = np.zeros((n, 3))
    open_ = np.ones(n, dtype=bool)

    def take(mask, reg, b0, b1, b2):
        m = open_ & mask
        region[m] = reg
        bary[m, 0] = b0 if np.isscalar(b0) else b0[m]
        bary[m, 1] = b1 if np.isscalar(b1) else b1[m]
        bary[m, 2] = b2 if np.isscalar(b2) else b2[m]
        open_[m] = False

    take((d1 <= 0.0) & (d2_ <= 0.0), PT_V0, 1.0, 0.0, 0.0)
    take((d3 >= 0.0) & (d4 <= d3), PT_V1, 0.0, 1.0, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = d1 / (d1 - d3)
    take((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), PT_E01, 1.0 - v, v, 0.0)
    take((d6 >= 0.0) & (d5 <= d6), PT_V2, 0.0, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = d2_ / (d2_ - d6)
    take((vb <= 0.0) & (d2_ >= 0.0) & (d6 <= 0.0), PT_E02, 1.0 - w, 0.0, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        w2 = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    take((va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0), PT_E12, 0.0, 1.0 - w2, w2)
    # interior: barycentric from the sub-areas
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v_in = vb / denom
        w_in = vc / denom
    m = open_
    bary[m, 1] = v_in[m]
    bary[m, 2] = w_in[m]
    bary[m, 0] = 1.0 - v_in[m] - w_in[m]
    bad = m & ~np.isfinite(bary).all(axis=1)
    if np.any(bad):
        # degenerate current triangle: fall back to the nearest edge
        for i in np.flatnonzero(bad):
            best = None
            for reg, (ea, eb) in ((PT_E01, (t0[i], t1[i])), (PT_E12, (t1[i], t2[i])), (PT_E02, (t0[i], t2[i]))):
                dd, s = _point_segment(p[i], ea, eb)
                if best is None or dd < best[0]:
                    best = (dd, reg, s)
            region[i] = best[1]
            b = np.zeros(3)
            if best[1] == PT_E01:
                b[0], b[1] = 1.0 - best[2], best[2]
            elif best[1] == PT_E12:
                b[1], b[2] = 1.0 - best[2], best[2]
            else:
                b[0], b[2] = 1.0 - best[2], best[2]
            bary[i] = b

    closest = bary[:, 0:1] * t0 + bary[:, 1:2] * t1 + bary[:, 2:3] * t2
    diff = p - closest
    d2 = np.einsum("nd,nd->n", diff, diff)
    if single:
        return float(d2[0]), int(region[0]), bary[0]
    return d2, region, bary


def _point_segment(p, a, b):
    ab = b - a
    t = float(np.dot(p - a, ab) / max(np.dot(ab, ab), 1e-300))
    t = min(1.0, max(0.0, t))
    c = a + t * ab
    return float(np.dot(p - c, p - c)), t


def edge_edge_distance(a0, a1, b0, b1):
    """Squared distance, region code, and closest-point parameters (s, t)."""
    single = np.asarray(a0).ndim == 1
    a0 = np.atleast_2d(np.asarray(a0, dtype=np.float64))
    a1 = np.atleast_2d(np.asarray(a1, dtype=np.float64))
    b0 = np.atleast_2d(np.asarray(b0, dtype=np.float64))
    b1 = np.atleast_2d(np.asarray(b1, dtype=np.float64))
    u = a1 - a0
    v = b1 - b0
    r = a0 - b0
    A = np.einsum("nd,nd->n", u, u)
    E = np.einsum("nd,nd->n", v, v)
    if single and (A[0] < 1e-24 or E[0] < 1e-24):
        raise DegenerateEdge("segment has near-zero length")
    B = np.einsum("nd,nd->n", u, v)
    C = np.einsum("nd,nd->n", u, r)
    F = np.einsum("nd,nd->n", v, r)
    denom = A * E - B * B
    parallel = denom <= 1e-12 * A * E
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(parallel, 0.0, np.clip((B * F - C * E) / np.where(denom == 0.0, 1.0, denom), 0.0, 1.0))
        t = (B * s + F) / np.maximum(E, 1e-300)
    low = t < 0.0
    high = t > 1.0
    t = np.clip(t, 0.0, 1.0)
    s = np.where(low, np.clip(-C / np.maximum(A, 1e-300), 0.0, 1.0), s)
    s = np.where(high, np.clip((B - C) / np.maximum(A, 1e-300), 0.0, 1.0), s)
    sa = np.where(s == 0.0, 0, np.where(s == 1.0, 1, 2))
    sb = np.where(t == 0.0, 0, np.where(t == 1.0, 1, 2))
    region = (3 * sa + sb).astype(np.int64)
    wa = a0 + s[:, None] * u
    wb = b0 + t[:, None] * v
    diff = wa - wb
    d2 = np.einsum("nd,nd->n", diff, diff)
    if single:
        return float(d2[0]), int(region[0]), float(s[0]), float(t[0])
    return d2, region, s, t


# ---------------------------------------------------------------------------
# squared-distance derivative kernels
#
# All kernels are batch-first: (N,3) point stacks in, (N,k) gradients and
# (N,k,k) Hessians out. Scalar entry points delegate to them with N = 1.


def _cross(a, b):
    # np.cross has significant per-call overhead; spell it out
    out = np.empty_like(a)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _skew_batch(v):
    n = v.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def _outer(a, b):
    return a[:, :, None] * b[:, None, :]


def _pp_batch(x0, x1):
    diff = x0 - x1
    d2 = np.einsum("nd,nd->n", diff, diff)
    n = x0.shape[0]
    g = np.concatenate([2.0 * diff, -2.0 * diff], axis=1)
    H = np.empty((n, 6, 6))
    I = np.eye(3)
    H[:, :3, :3] = 2.0 * I
    H[:, :3, 3:] = -2.0 * I
    H[:, 3:, :3] = -2.0 * I
    H[:, 3:, 3:] = 2.0 * I
    return d2, g, H


def _crossnorm2_batch(u, v):
    """q = ||u x v||^2 with gradient (N,6) and Hessian (N,6,6) over (u, v)."""
    nvec = _cross(u, v)
    q = np.einsum("nd,nd->n", nvec, nvec)
    gu = 2.0 * _cross(v, nvec)
    gv = 2.0 * _cross(nvec, u)
    I = np.eye(3)
    uu = _outer(u, u)
    vv = _outer(v, v)
    uv = _outer(u, v)
    dot_uv = np.einsum("nd,nd->n", u, v)
    n = u.shape[0]
    H = np.empty((n, 6, 6))
    H[:, :3, :3] = 2.0 * (np.einsum("nd,nd->n", v, v)[:, None, None] * I - vv)
    H[:, 3:, 3:] = 2.0 * (np.einsum("nd,nd->n", u, u)[:, None, None] * I - uu)
    Huv = 2.0 * (2.0 * uv - dot_uv[:, None, None] * I - np.swapaxes(uv, 1, 2))
    H[:, :3, 3:] = Huv
    H[:, 3:, :3] = np.swapaxes(Huv, 1, 2)
    g = np.concatenate([gu, gv], axis=1)
    return q, g, H


def _point_line_batch(p, e0, e1):
    """d2 of point vs infinite line through (e0, e1), over (p, e0, e1)."""
    u = e1 - e0
    w = p - e0
    rho, g_rho6, H_rho6 = _crossnorm2_batch(u, w)
    tau = np.einsum("nd,nd->n", u, u)
    n = p.shape[0]
    g_tau6 = np.zeros((n, 6))
    g_tau6[:, :3] = 2.0 * u
    d2 = rho / tau
    t1 = tau[:, None]
    t2 = (tau * tau)[:, None]
    g6 = g_rho6 / t1 - (rho / (tau * tau))[:, None] * g_tau6
    H6 = (
        H_rho6 / t1[:, :, None]
        - (_outer(g_rho6, g_tau6) + _outer(g_tau6, g_rho6)) / t2[:, :, None]
        + (2.0 * rho / tau**3)[:, None, None] * _outer(g_tau6, g_tau6)
    )
    H6[:, :3, :3] -= (2.0 * rho / (tau * tau))[:, None, None] * np.eye(3)
    # (u, w) -> (p, e0, e1)
    g9 = np.empty((n, 9))
    g9[:, 0:3] = g6[:, 3:6]
    g9[:, 3:6] = -g6[:, 0:3] - g6[:, 3:6]
    g9[:, 6:9] = g6[:, 0:3]
    H9 = _congruence(H6, _L_POINT_LINE)
    return d2, g9, H9


def _congruence(H_small, L):
    """L^T H L for a constant small-to-large linear map, batched."""
    tmp = np.einsum("nab,bc->nac", H_small, L)
    return np.einsum("ba,nbc->nac", L, tmp)


_L_POINT_LINE = np.zeros((6, 9))  # (u,w) from (p,e0,e1)
_L_POINT_LINE[0:3, 6:9] = np.eye(3)
_L_POINT_LINE[0:3, 3:6] = -np.eye(3)
_L_POINT_LINE[3:6, 0:3] = np.eye(3)
_L_POINT_LINE[3:6, 3:6] = -np.eye(3)

_L_PLANE = np.zeros((9, 12))  # (u,v,w) from (p,t0,t1,t2)
_L_PLANE[0:3, 6:9] = np.eye(3)
_L_PLANE[0:3, 3:6] = -np.eye(3)
_L_PLANE[3:6, 9:12] = np.eye(3)
_L_PLANE[3:6, 3:6] = -np.eye(3)
_L_PLANE[6:9, 0:3] = np.eye(3)
_L_PLANE[6:9, 3:6] = -np.eye(3)

_L_LINES = np.zeros((9, 12))  # (u,v,w) from (a0,a1,b0,b1)
_L_LINES[0:3, 3:6] = np.eye(3)
_L_LINES[0:3, 0:3] = -np.eye(3)
_L_LINES[3:6, 9:12] = np.eye(3)
_L_LINES[3:6, 6:9] = -np.eye(3)
_L_LINES[6:9, 6:9] = np.eye(3)
_L_LINES[6:9, 0:3] = -np.eye(3)


def _plane_core_batch(u, v, w):
    """d2 = (w.(u x v))^2 / ||u x v||^2 over (u, v, w), batched."""
    nvec = _cross(u, v)
    sigma = np.einsum("nd,nd->n", w, nvec)
    q = np.maximum(np.einsum("nd,nd->n", nvec, nvec), 1e-300)
    n = u.shape[0]
    gs = np.concatenate([_cross(v, w), _cross(w, u), nvec], axis=1)
    Hs = np.zeros((n, 9, 9))
    sw = _skew_batch(w)
    sv = _skew_batch(v)
    su = _skew_batch(u)
    Hs[:, 0:3, 3:6] = -sw
    Hs[:, 0:3, 6:9] = sv
    Hs[:, 3:6, 0:3] = sw
    Hs[:, 3:6, 6:9] = -su
    Hs[:, 6:9, 0:3] = -sv
    Hs[:, 6:9, 3:6] = su
    _, gq6, Hq6 = _crossnorm2_batch(u, v)
    gq = np.zeros((n, 9))
    gq[:, :6] = gq6
    d2 = sigma * sigma / q
    c_a = (2.0 * sigma / q)[:, None]
    c_b = (sigma * sigma / q**2)[:, None]
    g = c_a * gs - c_b * gq
    H = (
        (2.0 / q)[:, None, None] * _outer(gs, gs)
        + c_a[:, :, None] * Hs
        - (2.0 * sigma / q**2)[:, None, None] * (_outer(gs, gq) + _outer(gq, gs))
        + (2.0 * sigma * sigma / q**3)[:, None, None] * _outer(gq, gq)
    )
    H[:, :6, :6] -= c_b[:, :, None] * Hq6
    return d2, g, H


def _point_plane_batch(p, t0, t1, t2):
    d2, g9, H9 = _plane_core_batch(t1 - t0, t2 - t0, p - t0)
    g12 = np.einsum("ba,nb->na", _L_PLANE, g9)
    return d2, g12, _congruence(H9, _L_PLANE)


def _line_line_batch(a0, a1, b0, b1):
    d2, g9, H9 = _plane_core_batch(a1 - a0, b1 - b0, b0 - a0)
    g12 = np.einsum("ba,nb->na", _L_LINES, g9)
    return d2, g12, _congruence(H9, _L_LINES)


def _lift_batch(d2, g, H, slots, out_d2, out_g, out_H, mask):
    out_d2[mask] = d2
    idx = np.flatnonzero(mask)
    for bi, si in enumerate(slots):
        out_g[idx, 3 * si : 3 * si + 3] = g[:, 3 * bi : 3 * bi + 3]
        for bj, sj in enumerate(slots):
            out_H[idx, 3 * si : 3 * si + 3, 3 * sj : 3 * sj + 3] = H[:, 3 * bi : 3 * bi + 3, 3 * bj : 3 * bj + 3]


# slot tables: which pair vertices feed each region's primitive kernel
_PT_SLOTS = {
    PT_V0: (0, 1),
    PT_V1: (0, 2),
    PT_V2: (0, 3),
    PT_E01: (0, 1, 2),
    PT_E12: (0, 2, 3),
    PT_E02: (0, 1, 3),
}


def pt_d2_grad_hess_batch(pts, regions):
    """Region-routed squared-distance derivatives for PT pairs.

    ``pts`` is (N,4,3) stacked [p, t0, t1, t2]; returns d2 (N,), grad
    (N,12), hess (N,12,12).
    """
    n = pts.shape[0]
    d2 = np.empty(n)
    g = np.zeros((n, 12))
    H = np.zeros((n, 12, 12))
    for region in np.unique(regions):
        m = regions == region
        sub = pts[m]
        if region == PT_INT:
            dd, gg, hh = _point_plane_batch(sub[:, 0], sub[:, 1], sub[:, 2], sub[:, 3])
            d2[m] = dd
            g[m] = gg
            H[m] = hh
        else:
            slots = _PT_SLOTS[int(region)]
            if len(slots) == 2:
                dd, gg, hh = _pp_batch(sub[:, slots[0]], sub[:, slots[1]])
            else:
                dd, gg, hh = _point_line_batch(sub[:, slots[0]], sub[:, slots[1]], sub[:, slots[2]])
            _lift_batch(dd, gg, hh, slots, d2, g, H, m)
    return d2, g, H


def ee_d2_grad_hess_batch(pts, regions):
    """Region-routed squared-distance derivatives for EE pairs.

    ``pts`` is (N,4,3) stacked [a0, a1, b0, b1].
    """
    n = pts.shape[0]
    d2 = np.empty(n)
    g = np.zeros((n, 12))
    H = np.zeros((n, 12, 12))
    for region in np.unique(regions):
        m = regions == region
        sub = pts[m]
        sa, sb = divmod(int(region), 3)
        if sa < 2 and sb < 2:
            slots = (sa, 2 + sb)
            dd, gg, hh = _pp_batch(sub[:, slots[0]], sub[:, slots[1]])
            _lift_batch(dd, gg, hh, slots, d2, g, H, m)
        elif sa < 2:
            slots = (sa, 2, 3)
            dd, gg, hh = _point_line_batch(sub[:, sa], sub[:, 2], sub[:, 3])
            _lift_batch(dd, gg, hh, slots, d2, g, H, m)
        elif sb < 2:
            slots = (2 + sb, 0, 1)
            dd, gg, hh = _point_line_batch(sub[:, 2 + sb], sub[:, 0], sub[:, 1])
            _lift_batch(dd, gg, hh, slots, d2, g, H, m)
        else:
            dd, gg, hh = _line_line_batch(sub[:, 0], sub[:, 1], sub[:, 2], sub[:, 3])
            d2[m] = dd
            g[m] = gg
            H[m] = hh
    return d2, g, H


def pt_d2_grad_hess(p, t0, t1, t2, region):
    """Squared-distance value/gradient/Hessian over [p, t0, t1, t2]."""
    pts = np.stack([p, t0, t1, t2])[None]
    d2, g, H = pt_d2_grad_hess_batch(pts, np.array([region]))
    return float(d2[0]), g[0], H[0]


def ee_d2_grad_hess(a0, a1, b0, b1, region):
    """Squared-distance value/gradient/Hessian over [a0, a1, b0, b1]."""
    pts = np.stack([a0, a1, b0, b1])[None]
    d2, g, H = ee_d2_grad_hess_batch(pts, np.array([region]))
    return float(d2[0]), g[0], H[0]


# ---------------------------------------------------------------------------
# barrier


def barrier(d, dhat):
    """b(d) = -(d - dhat)^2 log(d / dhat) for d < dhat, else 0."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0.0):
        raise NonpositiveDistance("barrier evaluated at nonpositive distance")
    with np.errstate(divide="ignore"):
        val = np.where(d < dhat, -((d - dhat) ** 2) * np.log(d / dhat), 0.0)
    return float(val) if val.ndim == 0 else val


def barrier_grad(d, dhat):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0.0):
        raise NonpositiveDistance("barrier evaluated at nonpositive distance")
    with np.errstate(divide="ignore"):
        val = np.where(
            d < dhat, -2.0 * (d - dhat) * np.log(d / dhat) - (d - dhat) ** 2 / d, 0.0
        )
    return float(val) if val.ndim == 0 else val


def barrier_hess(d, dhat):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0.0):
        raise NonpositiveDistance("barrier evaluated at nonpositive distance")
    with np.errstate(divide="ignore"):
        val = np.where(
            d < dhat,
            -2.0 * np.log(d / dhat) - 4.0 * (d - dhat) / d + (d - dhat) ** 2 / d**2,
            0.0,
        )
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# smoothed static/dynamic friction transition


def f1(y, epsv, h):
    """Slope of the friction mollifier: quadratic ramp below h*epsv, then 1."""
    y = np.asarray(y, dtype=np.float64)
    eh = epsv * h
    val = np.where(y >= eh, 1.0, -(y**2) / eh**2 + 2.0 * y / eh)
    return float(val) if val.ndim == 0 else val


def f0(y, epsv, h):
    """Integrated mollifier; equals y on the dynamic plateau."""
    y = np.asarray(y, dtype=np.float64)
    eh = epsv * h
    val = np.where(y >= eh, y, y**2 / eh - y**3 / (3.0 * eh**2) + eh / 3.0)
    return float(val) if val.ndim == 0 else val


def f1_over_y(y, epsv, h):
    """f1(y)/y with its smooth y->0 limit (2 / (epsv h))."""
    eh = epsv * h
    if y >= eh:
        return 1.0 / y
    return 2.0 / eh - y / eh**2


def tangent_basis(n):
    """Orthonormal (3,2) frame spanning the plane orthogonal to n."""
    n = n / np.linalg.norm(n)
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(n)))] = 1.0
    t1 = np.cross(n, ref)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.column_stack([t1, t2])


@dataclass
class FrictionDatum:
    """Lagged per-pair friction state, frozen over one time step."""

    kind: str
    verts: np.ndarray  # 4 global vertex indices
    coeffs: np.ndarray  # relative-displacement combination coefficients
    lam: float  # lagged normal force magnitude, N
    frame: np.ndarray  # (3,2) tangential frame
    normal: np.ndarray


# ---------------------------------------------------------------------------
# pair collection


class ContactSet:
    """Active proximity pairs at one configuration, stored as flat arrays."""

    def __init__(self, pt_idx, pt_d2, pt_region, pt_bary, ee_idx, ee_d2, ee_region, ee_s, ee_t):
        self.pt_idx = pt_idx  # (P,4): point, t0, t1, t2
        self.pt_d2 = pt_d2
        self.pt_region = pt_region
        self.pt_bary = pt_bary
        self.ee_idx = ee_idx  # (Q,4): a0, a1, b0, b1
        self.ee_d2 = ee_d2
        self.ee_region = ee_region
        self.ee_s = ee_s
        self.ee_t = ee_t

    @property
    def count(self):
        return self.pt_idx.shape[0] + self.ee_idx.shape[0]

    def min_distance(self):
        best = np.inf
        if self.pt_d2.size:
            best = min(best, float(self.pt_d2.min()))
        if self.ee_d2.size:
            best = min(best, float(self.ee_d2.min()))
        return np.sqrt(best) if np.isfinite(best) else np.inf

    def pairs(self):
        out = []
        for i in range(self.pt_idx.shape[0]):
            out.append(
                ContactPair(KIND_PT, tuple(self.pt_idx[i]), float(np.sqrt(self.pt_d2[i])), int(self.pt_region[i]))
            )
        for i in range(self.ee_idx.shape[0]):
            out.append(
                ContactPair(KIND_EE, tuple(self.ee_idx[i]), float(np.sqrt(self.ee_d2[i])), int(self.ee_region[i]))
            )
        return out

    @staticmethod
    def empty():
        return ContactSet(
            np.empty((0, 4), np.int64), np.empty(0), np.empty(0, np.int64), np.empty((0, 3)),
            np.empty((0, 4), np.int64), np.empty(0), np.empty(0, np.int64), np.empty(0), np.empty(0),
        )


def collect_pairs(x, topo: SurfaceTopology, dhat, margin=0.0, skip_fixed_pairs=True):
    """All PT/EE pairs with d < dhat + margin (superset contract).

    Pairs sharing a collision-mesh vertex are excluded, as are pairs whose
    primitives both consist solely of fixed (scripted/static) vertices
    when ``skip_fixed_pairs`` is set: they cannot influence free DoFs.
    """
    r = dhat + margin
    tris = topo.triangles
    edges = topo.edges
    fixed = topo.fixed_verts

    # vertex vs triangle
    tri_pts = x[tris]
    tri_boxes = inflate(aabbs(tri_pts), r)
    cell = pick_cell_size(tri_boxes, r)
    hash_t = SpatialHash(cell)
    hash_t.insert(tri_boxes)
    tri_fixed = fixed[tris].all(axis=1)
    cand_v = []
    cand_t = []
    # vertices sharing a grid cell share a query result
    vcells = np.floor(x / hash_t.cell).astype(np.int64)
    groups = {}
    for vid, key in enumerate(map(tuple, vcells)):
        groups.setdefault(key, []).append(vid)
    for key, vids in groups.items():
        hits = hash_t.table.get(key)
        if not hits:
            continue
        hits = np.fromiter(sorted(set(hits)), dtype=np.int64)
        for vid in vids:
            cand_v.append(np.full(hits.size, vid, dtype=np.int64))
            cand_t.append(hits)
    if hash_t.oversize_idx.size:
        # triangles too large for the grid: direct containment test
        osb = hash_t.oversize_boxes
        inside = np.all(x[:, None, :] >= osb[None, :, 0, :], axis=2) & np.all(
            x[:, None, :] <= osb[None, :, 1, :], axis=2
        )
        vs, osi = np.nonzero(inside)
        if vs.size:
            cand_v.append(vs.astype(np.int64))
            cand_t.append(hash_t.oversize_idx[osi])
    if cand_v:
        cv = np.concatenate(cand_v)
        ct = np.concatenate(cand_t)
        share = (tris[ct] == cv[:, None]).any(axis=1)
        keep = ~share
        if skip_fixed_pairs:
            keep &= ~(fixed[cv] & tri_fixed[ct])
        cv, ct = cv[keep], ct[keep]
        if cv.size:
            d2, region, bary = point_triangle_distance(
                x[cv], x[tris[ct, 0]], x[tris[ct, 1]], x[tris[ct, 2]]
            )
            near = d2 < r * r
            cv, ct = cv[near], ct[near]
            pt_idx = np.column_stack([cv, tris[ct]])
            pt_d2, pt_region, pt_bary = d2[near], region[near], bary[near]
        else:
            pt_idx = np.empty((0, 4), np.int64)
            pt_d2 = np.empty(0)
            pt_region = np.empty(0, np.int64)
            pt_bary = np.empty((0, 3))
    else:
        pt_idx = np.empty((0, 4), np.int64)
        pt_d2 = np.empty(0)
        pt_region = np.empty(0, np.int64)
        pt_bary = np.empty((0, 3))

    # edge vs edge
    edge_pts = x[edges]
    edge_fixed = fixed[edges].all(axis=1)
    ea, eb = cell_pairs(aabbs(edge_pts), r)
    if ea.size:
        share = (
            (edges[ea, 0:1] == edges[eb]).any(axis=1) | (edges[ea, 1:2] == edges[eb]).any(axis=1)
        )
        keep = ~share
        if skip_fixed_pairs:
            keep &= ~(edge_fixed[ea] & edge_fixed[eb])
        ea, eb = ea[keep], eb[keep]
        if ea.size:
            d2, region, s, t = edge_edge_distance(
                x[edges[ea, 0]], x[edges[ea, 1]], x[edges[eb, 0]], x[edges[eb, 1]]
            )
            near = d2 < r * r
            ea, eb = ea[near], eb[near]
            ee_idx = np.column_stack([edges[ea], edges[eb]])
            ee_d2, ee_region, ee_s, ee_t = d2[near], region[near], s[near], t[near]
        else:
            ee_idx = np.empty((0, 4), np.int64)
            ee_d2 = np.empty(0)
            ee_region = np.empty(0, np.int64)
            ee_s = np.empty(0)
            ee_t = np.empty(0)
    else:
        ee_idx = np.empty((0, 4), np.int64)
        ee_d2 = np.empty(0)
        ee_region = np.empty(0, np.int64)
        ee_s = np.empty(0)
        ee_t = np.empty(0)

    return ContactSet(pt_idx, pt_d2, pt_region, pt_bary, ee_idx, ee_d2, ee_region, ee_s, ee_t)


# ---------------------------------------------------------------------------
# barrier energy assembly


def _project_psd_batch(blocks):
    if blocks.shape[0] == 0:
        return blocks
    blocks = 0.5 * (blocks + np.swapaxes(blocks, -1, -2))
    w, V = np.linalg.eigh(blocks)
    w = np.maximum(w, 0.0)
    return np.einsum("...ij,...j,...kj->...ik", V, w, V)


def barrier_energy_grad_hess(x, cset: ContactSet, params: ContactParams):
    """kappa-scaled barrier energy with gradient and projected pair Hessians.

    Returns (B, grad (Nv,3), blocks (P,12,12), block_verts (P,4)). Regions
    stored in ``cset`` must have been classified at this same ``x``.
    """
    grad = np.zeros_like(x)
    energy = 0.0
    all_blocks = []
    all_verts = []
    for idx, regions, batch_fn in (
        (cset.pt_idx, cset.pt_region, pt_d2_grad_hess_batch),
        (cset.ee_idx, cset.ee_region, ee_d2_grad_hess_batch),
    ):
        if idx.shape[0] == 0:
            continue
        d2, g_s, H_s = batch_fn(x[idx], regions)
        e, g, blocks, act = _barrier_chain_batch(d2, g_s, H_s, params)
        if act is None:
            continue
        energy += e
        np.add.at(grad.reshape(-1), (3 * idx[act][:, :, None] + np.arange(3)).ravel(), g.ravel())
        all_blocks.append(blocks)
        all_verts.append(idx[act])
    if all_blocks:
        blocks = _project_psd_batch(np.concatenate(all_blocks))
        block_verts = np.concatenate(all_verts)
    else:
        blocks = np.empty((0, 12, 12))
        block_verts = np.empty((0, 4), np.int64)
    return energy, grad, blocks, block_verts


def _barrier_chain_batch(d2, g_s, H_s, params):
    """Chain rule of kappa*b(sqrt(s)) through squared-distance kernels."""
    if np.any(d2 <= 0.0):
        raise NonpositiveDistance(f"pair distance^2 min = {d2.min():.3e}")
    kappa, dhat = params.kappa, params.dhat
    d = np.sqrt(d2)
    act = d < dhat
    if not np.any(act):
        return 0.0, None, None, None
    d = d[act]
    d2a = d2[act]
    g_s = g_s[act]
    H_s = H_s[act]
    db = barrier_grad(d, dhat)
    ddb = barrier_hess(d, dhat)
    e = kappa * float(np.sum(barrier(d, dhat)))
    g = (kappa * db / (2.0 * d))[:, None] * g_s
    c1 = kappa * (ddb / (4.0 * d2a) - db / (4.0 * d2a * d))
    c2 = kappa * db / (2.0 * d)
    H = c1[:, None, None] * _outer(g_s, g_s) + c2[:, None, None] * H_s
    return e, g, H, act


def barrier_energy(x, cset: ContactSet, params: ContactParams):
    """Barrier energy only (used by line-search probes)."""
    d2 = np.concatenate([cset.pt_d2, cset.ee_d2])
    if d2.size == 0:
        return 0.0
    d = np.sqrt(d2)
    return params.kappa * float(np.sum(barrier(d, params.dhat)))


# ---------------------------------------------------------------------------
# lagged friction


def friction_precompute(x, cset: ContactSet, params: ContactParams, h):
    """Freeze per-pair friction state (lambda, frame, witness) at x^n.

    Pairs at or beyond dhat carry no normal force and are excluded.
    """
    out = []
    for i in range(cset.pt_idx.shape[0]):
        d = np.sqrt(cset.pt_d2[i])
        if d >= params.dhat:
            continue
        vi = cset.pt_idx[i]
        b = cset.pt_bary[i]
        witness = b[0] * x[vi[1]] + b[1] * x[vi[2]] + b[2] * x[vi[3]]
        n = (x[vi[0]] - witness) / d
        lam = params.kappa * abs(barrier_grad(d, params.dhat))
        coeffs = np.array([1.0, -b[0], -b[1], -b[2]])
        out.append(FrictionDatum(KIND_PT, vi.copy(), coeffs, lam, tangent_basis(n), n))
    for i in range(cset.ee_idx.shape[0]):
        d = np.sqrt(cset.ee_d2[i])
        if d >= params.dhat:
            continue
        vi = cset.ee_idx[i]
        s, t = cset.ee_s[i], cset.ee_t[i]
        wa = (1.0 - s) * x[vi[0]] + s * x[vi[1]]
        wb = (1.0 - t) * x[vi[2]] + t * x[vi[3]]
        n = (wa - wb) / d
        lam = params.kappa * abs(barrier_grad(d, params.dhat))
        coeffs = np.array([1.0 - s, s, -(1.0 - t), -t])
        out.append(FrictionDatum(KIND_EE, vi.copy(), coeffs, lam, tangent_basis(n), n))
    return out


def friction_energy_grad_hess(x, x_prev, data, params: ContactParams, h, order=2):
    """Lagged friction potential sum_k mu lam_k f0(||u_k||) and derivatives.

    The frame, lambda, and witness coefficients are held fixed, so the
    potential is a smooth function of x alone (semi-implicit friction).
    """
    mu, epsv = params.mu, params.epsv
    if not data:
        if order == 0:
            return 0.0
        return 0.0, np.zeros_like(x), np.empty((0, 12, 12)), np.empty((0, 4), np.int64)
    verts = np.stack([d.verts for d in data])  # (K,4)
    coeffs = np.stack([d.coeffs for d in data])
    lam = np.array([d.lam for d in data])
    frames = np.stack([d.frame for d in data])  # (K,3,2)
    eh = epsv * h

    dx = x[verts] - x_prev[verts]  # (K,4,3)
    rel = np.einsum("ki,kid->kd", coeffs, dx)
    u = np.einsum("kdj,kd->kj", frames, rel)  # (K,2)
    y = np.sqrt(np.einsum("kj,kj->k", u, u))
    energy = float(np.sum(mu * lam * f0(y, epsv, h)))
    if order == 0:
        return energy

    k1 = np.where(y >= eh, 1.0 / np.maximum(y, 1e-300), 2.0 / eh - y / eh**2)
    grad_rel = (mu * lam * k1)[:, None] * np.einsum("kdj,kj->kd", frames, u)
    grad = np.zeros_like(x)
    contrib = coeffs[:, :, None] * grad_rel[:, None, :]  # (K,4,3)
    np.add.at(grad.reshape(-1), (3 * verts[:, :, None] + np.arange(3)).ravel(), contrib.ravel())
    if order < 2:
        return energy, grad, np.empty((0, 12, 12)), np.empty((0, 4), np.int64)

    f1p = np.where(y >= eh, 0.0, 2.0 / eh - 2.0 * y / eh**2)
    tiny = y <= 1e-14
    uhat = u / np.maximum(y, 1e-300)[:, None]
    P = _outer(uhat, uhat)
    I2 = np.eye(2)
    M2 = (mu * lam * f1p)[:, None, None] * P + (mu * lam * k1)[:, None, None] * (I2 - P)
    if np.any(tiny):
        M2[tiny] = (mu * lam[tiny] * k1[tiny])[:, None, None] * I2
    H_rel = np.einsum("kaj,kjl,kbl->kab", frames, M2, frames)  # (K,3,3)
    blocks = np.einsum("ki,kj,kab->kiajb", coeffs, coeffs, H_rel).reshape(-1, 12, 12)
    blocks = _project_psd_batch(blocks)
    return energy, grad, blocks, verts
