"""Mesh file readers and writers.

Two on-disk formats are supported:

* ASCII OBJ with ``v``/``f`` records (1-based indices, triangles only).
* A minimal ASCII tet format: line 1 is ``tet <nv> <nt>``, followed by
  ``nv`` lines ``x y z`` and ``nt`` lines ``i0 i1 i2 i3`` (0-based).

All numeric output is printed with 17 significant digits so that a
write/read round trip is bit exact.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError

_FMT = "%.17g"

# OBJ record types silently skipped on read; anything else is an error.
_OBJ_IGNORED = {"o", "g", "s"}


def load_obj(path):
    """Read a triangle surface from an ASCII OBJ file.

    Returns (vertices (V,3) float64, triangles (F,3) int64).
    """
    vertices = []
    faces = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) != 4:
                    raise ParseError(path, f"expected 'v x y z', got {line!r}", lineno)
                try:
                    vertices.append([float(p) for p in parts[1:]])
                except ValueError:
                    raise ParseError(path, f"bad vertex coordinate in {line!r}", lineno)
            elif tag == "f":
                if len(parts) != 4:
                    raise ParseError(path, f"only triangle faces are supported, got {line!r}", lineno)
                idx = []
                for tok in parts[1:]:
                    tok = tok.split("/")[0]
                    try:
                        i = int(tok)
                    except ValueError:
                        raise ParseError(path, f"bad face index {tok!r}", lineno)
                    if i <= 0:
                        raise ParseError(path, "face indices must be positive (1-based)", lineno)
                    idx.append(i - 1)
                faces.append(idx)
            elif tag in _OBJ_IGNORED:
                continue
            else:
                raise ParseError(path, f"unsupported OBJ record {tag!r}", lineno)
    if not vertices:
        raise ParseError(path, "no vertices")
    verts = np.asarray(vertices, dtype=np.float64)
    tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if tris.size and tris.max() >= len(verts):
        raise ParseError(path, f"face index {tris.max() + 1} exceeds vertex count {len(verts)}")
    return verts, tris


def save_obj(path, vertices, triangles, object_names=None, offsets=None):
    """Write a triangle surface as ASCII OBJ.

    ``object_names``/``offsets`` optionally split the face list into named
    ``o`` groups; offsets are vertex offsets where each object starts.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    with open(path, "w", encoding="ascii") as fh:
        for v in vertices:
            fh.write(f"v {_FMT % v[0]} {_FMT % v[1]} {_FMT % v[2]}\n")
        if object_names is None:
            for t in triangles:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
        else:
            bounds = list(offsets) + [vertices.shape[0]]
            for name, lo, hi in zip(object_names, bounds[:-1], bounds[1:]):
                fh.write(f"o {name}\n")
                mask = (triangles[:, 0] >= lo) & (triangles[:, 0] < hi)
                for t in triangles[mask]:
                    fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def load_tet(path):
    """Read the minimal ASCII tet format; trailing garbage is rejected."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, "empty file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "tet":
        raise ParseError(path, f"expected header 'tet <nv> <nt>', got {lines[0]!r}", 1)
    try:
        nv, nt = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError(path, "header counts must be integers", 1)
    if nv < 0 or nt < 0:
        raise ParseError(path, "negative counts in header", 1)
    expected = 1 + nv + nt
    if len(lines) < expected:
        raise ParseError(path, f"expected {expected} lines, found {len(lines)}")
    verts = np.empty((nv, 3), dtype=np.float64)
    for i in range(nv):
        lineno = 2 + i
        parts = lines[1 + i].split()
        if len(parts) != 3:
            raise ParseError(path, f"expected 3 coordinates, got {lines[1 + i]!r}", lineno)
        try:
            verts[i] = [float(p) for p in parts]
        except ValueError:
            raise ParseError(path, f"bad coordinate in {lines[1 + i]!r}", lineno)
    tets = np.empty((nt, 4), dtype=np.int64)
    for i in range(nt):
        lineno = 2 + nv + i
        parts = lines[1 + nv + i].split()
        if len(parts) != 4:
            raise ParseError(path, f"expected 4 indices, got {lines[1 + nv + i]!r}", lineno)
        try:
            tets[i] = [int(p) for p in parts]
        except ValueError:
            raise ParseError(path, f"bad index in {lines[1 + nv + i]!r}", lineno)
    for extra in range(expected, len(lines)):
        if lines[extra].strip():
            raise ParseError(path, f"trailing garbage {lines[extra]!r}", extra + 1)
    if nt and (tets.min() < 0 or tets.max() >= nv):
        raise ParseError(path, "tet index out of range")
    return verts, tets


def save_tet(path, vertices, tets):
    vertices = np.asarray(vertices, dtype=np.float64)
    tets = np.asarray(tets, dtype=np.int64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"tet {len(vertices)} {len(tets)}\n")
        for v in vertices:
            fh.write(f"{_FMT % v[0]} {_FMT % v[1]} {_FMT % v[2]}\n")
        for t in tets:
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")


def format_float(x):
    """Canonical 17-significant-digit float formatting used in CSV output."""
    return _FMT % x
