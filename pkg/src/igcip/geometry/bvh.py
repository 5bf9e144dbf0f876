"""Axis-aligned bounding-volume hierarchy over triangles.

Built once per mesh (median split on the longest centroid axis, small leaf
buckets) and queried with branch-and-bound descent. Leaf triangles are
evaluated with the exact closest-point routine, so the accelerated query
returns the same distance as brute force over all triangles.
"""

from __future__ import annotations

import numpy as np

from .closest import closest_on_triangles

LEAF_SIZE = 8


class Bvh:
    def __init__(self, corners: np.ndarray):
        corners = np.asarray(corners, dtype=float)
        if corners.ndim != 3 or corners.shape[1:] != (3, 3):
            raise ValueError("corners must be (T, 3, 3)")
        if len(corners) == 0:
            raise ValueError("empty mesh")
        self._a = corners[:, 0, :]
        self._b = corners[:, 1, :]
        self._c = corners[:, 2, :]
        box_lo = corners.min(axis=1)
        box_hi = corners.max(axis=1)
        cent = corners.mean(axis=1)

        lo, hi, left, right, start, count = [], [], [], [], [], []
        order: list[int] = []

        def build(idx: np.ndarray) -> int:
            node = len(lo)
            lo.append(box_lo[idx].min(axis=0))
            hi.append(box_hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            if len(idx) <= LEAF_SIZE:
                start[node] = len(order)
                count[node] = len(idx)
                order.extend(idx.tolist())
            else:
                axis = int(np.argmax(cent[idx].max(axis=0) - cent[idx].min(axis=0)))
                ordered = idx[np.argsort(cent[idx, axis], kind="stable")]
                mid = len(ordered) // 2
                left[node] = build(ordered[:mid])
                right[node] = build(ordered[mid:])
            return node

        build(np.arange(len(corners)))
        self._lo = np.asarray(lo)
        self._hi = np.asarray(hi)
        self._left = np.asarray(left)
        self._right = np.asarray(right)
        self._start = np.asarray(start)
        self._count = np.asarray(count)
        self._order = np.asarray(order)

    def _box_dist_sq(self, node: int, p: np.ndarray) -> float:
        d = np.maximum(self._lo[node] - p, p - self._hi[node])
        d = np.maximum(d, 0.0)
        return float(d @ d)

    def closest(self, p: np.ndarray):
        """Return ``(dist_sq, closest_point, triangle_index)`` for point ``p``."""
        p = np.asarray(p, dtype=float)
        best_sq = np.inf
        best_pt = None
        best_tri = -1
        stack = [0]
        while stack:
            node = stack.pop()
            if self._box_dist_sq(node, p) > best_sq:
                continue
            if self._left[node] < 0:
                s = self._start[node]
                ids = self._order[s : s + self._count[node]]
                pts = closest_on_triangles(self._a[ids], self._b[ids], self._c[ids], p)
                diff = pts - p
                d_sq = np.einsum("ij,ij->i", diff, diff)
                k = int(np.argmin(d_sq))
                if d_sq[k] < best_sq:
                    best_sq = float(d_sq[k])
                    best_pt = pts[k]
                    best_tri = int(ids[k])
            else:
                l, r = int(self._left[node]), int(self._right[node])
                # visit the nearer child first
                if self._box_dist_sq(l, p) <= self._box_dist_sq(r, p):
                    stack.append(r)
                    stack.append(l)
                else:
                    stack.append(l)
                    stack.append(r)
        return best_sq, best_pt, best_tri
