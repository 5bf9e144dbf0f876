"""Exact closest point on a triangle, vectorised over arbitrary batch shapes.

Region classification follows the standard closest-point construction: the
query is tested against the vertex, edge and face Voronoi regions of the
triangle and the first matching region wins. Inputs broadcast against each
other, so the same routine serves single queries, whole-mesh brute force and
chunked (points x triangles) batches.
"""

from __future__ import annotations

import numpy as np


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def _safe(denom):
    # Guard divisions in branches that are never selected for the offending
    # elements; the claimed regions always have a nonzero denominator.
    return np.where(denom == 0.0, 1.0, denom)


def closest_on_triangles(tri_a, tri_b, tri_c, p) -> np.ndarray:
    """Closest point to ``p`` on triangles ``(tri_a, tri_b, tri_c)``.

    All arguments broadcast to a common shape ``(..., 3)``; the result has
    that shape.
    """
    a, b, c, p = np.broadcast_arrays(
        np.asarray(tri_a, dtype=float),
        np.asarray(tri_b, dtype=float),
        np.asarray(tri_c, dtype=float),
        np.asarray(p, dtype=float),
    )
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty(a.shape, dtype=float)
    undecided = np.ones(a.shape[:-1], dtype=bool)

    def claim(mask, value):
        take = undecided & mask
        out[take] = value[take]
        undecided[take] = False

    claim((d1 <= 0.0) & (d2 <= 0.0), a)
    claim((d3 >= 0.0) & (d4 <= d3), b)
    claim((d6 >= 0.0) & (d5 <= d6), c)

    t_ab = d1 / _safe(d1 - d3)
    claim((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), a + t_ab[..., None] * ab)

    t_ac = d2 / _safe(d2 - d6)
    claim((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), a + t_ac[..., None] * ac)

    t_bc = (d4 - d3) / _safe((d4 - d3) + (d5 - d6))
    claim(
        (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0),
        b + t_bc[..., None] * (c - b),
    )

    denom = _safe(va + vb + vc)
    v = (vb / denom)[..., None]
    w = (vc / denom)[..., None]
    interior = a + ab * v + ac * w
    out[undecided] = interior[undecided]
    return out
