"""Uniform spatial hash over primitive bounding boxes.

Boxes much larger than the cell (a big floor triangle, a long rod) are
kept out of the grid and tested by vectorized AABB overlap instead, which
preserves the superset guarantee without exploding insertion cost on
heterogeneous scenes. Query results are sorted so candidate ordering is
deterministic.
"""

from __future__ import annotations

import numpy as np

# boxes spanning more than this many cells per axis bypass the grid
OVERSIZE_SPAN = 4

_COMBO_CACHE = {}


def aabbs(points_per_prim):
    """AABBs (N,2,3) for primitives given as (N,K,3) corner stacks."""
    p = np.asarray(points_per_prim, dtype=np.float64)
    return np.stack([p.min(axis=1), p.max(axis=1)], axis=1)


def swept_aabbs(points_a, points_b):
    """AABBs covering primitives at both endpoint configurations."""
    lo = np.minimum(points_a.min(axis=1), points_b.min(axis=1))
    hi = np.maximum(points_a.max(axis=1), points_b.max(axis=1))
    return np.stack([lo, hi], axis=1)


def inflate(boxes, r):
    out = boxes.copy()
    out[:, 0] -= r
    out[:, 1] += r
    return out


def _overlap_any(box, others):
    """Boolean mask of ``others`` overlapping ``box``."""
    return np.all(others[:, 0] <= box[1], axis=1) & np.all(others[:, 1] >= box[0], axis=1)


class SpatialHash:
    """Grid hash keyed by integer cell coordinates, with an oversize list."""

    def __init__(self, cell_size):
        if cell_size <= 0.0:
            raise ValueError("cell size must be positive")
        self.cell = float(cell_size)
        self.table = {}
        self.oversize_idx = np.empty(0, np.int64)
        self.oversize_boxes = np.empty((0, 2, 3))

    def insert(self, boxes):
        """Insert boxes (N,2,3); values are box indices."""
        table = self.table
        los = np.floor(boxes[:, 0] / self.cell).astype(np.int64)
        his = np.floor(boxes[:, 1] / self.cell).astype(np.int64)
        span = his - los
        oversize = np.any(span >= OVERSIZE_SPAN, axis=1)
        self.oversize_idx = np.flatnonzero(oversize)
        self.oversize_boxes = boxes[oversize]
        single = np.all(span == 0, axis=1) & ~oversize
        # bulk path for boxes living in one cell (the common case)
        sidx = np.flatnonzero(single)
        if sidx.size:
            keys = los[sidx]
            order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
            keys = keys[order]
            sidx = sidx[order]
            starts = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
            bounds = np.concatenate([[0], starts, [sidx.size]])
            for a, b in zip(bounds[:-1], bounds[1:]):
                table.setdefault(tuple(keys[a]), []).extend(sidx[a:b].tolist())
        for idx in np.flatnonzero(~single & ~oversize):
            lo = los[idx]
            hi = his[idx]
            for i in range(lo[0], hi[0] + 1):
                for j in range(lo[1], hi[1] + 1):
                    for k in range(lo[2], hi[2] + 1):
                        table.setdefault((i, j, k), []).append(idx)

    def query(self, box):
        """Sorted unique indices of inserted boxes that may overlap ``box``."""
        lo = np.floor(box[0] / self.cell).astype(np.int64)
        hi = np.floor(box[1] / self.cell).astype(np.int64)
        found = set()
        table = self.table
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    hits = table.get((i, j, k))
                    if hits:
                        found.update(hits)
        if self.oversize_idx.size:
            found.update(self.oversize_idx[_overlap_any(box, self.oversize_boxes)].tolist())
        return np.fromiter(sorted(found), dtype=np.int64, count=len(found))


def pick_cell_size(boxes, radius):
    """Cell size covering the query radius, scaled to typical primitive size."""
    if boxes.shape[0] == 0:
        return max(radius, 1e-6)
    ext = (boxes[:, 1] - boxes[:, 0]).max(axis=1)
    return float(max(radius, np.median(ext), 1e-9))


def cell_pairs(boxes, radius):
    """Unique index pairs (i < j) of boxes within ``radius`` of each other.

    Grid-resident boxes are inflated by radius/2, so any pair with gap
    below the radius shares a cell; oversize boxes are paired by direct
    AABB overlap against everything.
    """
    n = boxes.shape[0]
    if n < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    inflated = inflate(boxes, 0.5 * radius)
    cell = pick_cell_size(inflated, radius)
    h = SpatialHash(cell)
    h.insert(inflated)
    ii = []
    jj = []
    combos = _COMBO_CACHE
    for members in h.table.values():
        k = len(members)
        if k < 2:
            continue
        arr = np.asarray(members, dtype=np.int64)
        if k not in combos:
            combos[k] = np.triu_indices(k, 1)
        a, b = combos[k]
        ii.append(arr[a])
        jj.append(arr[b])
    for oid in h.oversize_idx:
        mask = _overlap_any(inflated[oid], inflated)
        mask[oid] = False
        hits = np.flatnonzero(mask)
        if hits.size:
            ii.append(np.full(hits.size, oid, dtype=np.int64))
            jj.append(hits)
    if not ii:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    packed = np.unique(lo * np.int64(n) + hi)
    return packed // n, packed % n
