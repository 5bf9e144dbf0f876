"""Point-to-surface distance operations."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .closest import closest_on_triangles
from .core import TriMesh, as_point3

# Barycentric coordinates below this are treated as sitting on the
# vertex/edge feature itself when deciding which pseudo-normal to use.
FEATURE_TOL = 1e-9


class SurfaceHit(NamedTuple):
    distance: float
    point: np.ndarray
    triangle: int


class VertexHit(NamedTuple):
    distance: float
    vertex: int


def point_to_mesh_distance(p, mesh: TriMesh) -> SurfaceHit:
    """Exact unsigned distance from ``p`` to the surface of ``mesh``.

    Uses the mesh BVH; identical in value to :func:`brute_force_point_to_mesh`.
    """
    p = as_point3(p)
    if mesh.n_triangles == 0:
        raise ValueError("empty mesh")
    d_sq, pt, tri = mesh.bvh.closest(p)
    return SurfaceHit(float(np.sqrt(d_sq)), pt, tri)


def brute_force_point_to_mesh(p, mesh: TriMesh) -> SurfaceHit:
    """Reference path: evaluate every triangle, keep the first minimum."""
    p = as_point3(p)
    if mesh.n_triangles == 0:
        raise ValueError("empty mesh")
    c = mesh.corners()
    pts = closest_on_triangles(c[:, 0], c[:, 1], c[:, 2], p)
    diff = pts - p
    d_sq = np.einsum("ij,ij->i", diff, diff)
    k = int(np.argmin(d_sq))
    return SurfaceHit(float(np.sqrt(d_sq[k])), pts[k], k)


def point_to_vertexset_distance(p, mesh) -> VertexHit:
    """Distance from ``p`` to the nearest mesh vertex (ties: lowest index)."""
    p = as_point3(p)
    vertices = mesh.vertices if isinstance(mesh, TriMesh) else np.asarray(mesh, dtype=float)
    if len(vertices) == 0:
        raise ValueError("empty mesh")
    d = np.linalg.norm(vertices - p, axis=1)
    k = int(np.argmin(d))
    return VertexHit(float(d[k]), k)


def closest_points_on_mesh(mesh: TriMesh, points, chunk_budget: int = 400_000):
    """Exact closest surface points for many queries at once.

    Brute force over all triangles, chunked over the query points so the
    (points x triangles) broadcast stays in a bounded memory footprint.
    Returns ``(distances, closest_points, triangle_ids)``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if mesh.n_triangles == 0:
        raise ValueError("empty mesh")
    c = mesh.corners()
    t = len(c)
    chunk = max(1, chunk_budget // t)
    dist = np.empty(len(points))
    closest = np.empty((len(points), 3))
    tris = np.empty(len(points), dtype=np.int64)
    for s in range(0, len(points), chunk):
        block = points[s : s + chunk]
        pts = closest_on_triangles(
            c[None, :, 0], c[None, :, 1], c[None, :, 2], block[:, None, :]
        )
        diff = pts - block[:, None, :]
        d_sq = np.einsum("ijk,ijk->ij", diff, diff)
        k = np.argmin(d_sq, axis=1)
        rows = np.arange(len(block))
        dist[s : s + chunk] = np.sqrt(d_sq[rows, k])
        closest[s : s + chunk] = pts[rows, k]
        tris[s : s + chunk] = k
    return dist, closest, tris


def _pseudo_normal(mesh: TriMesh, tri: int, bary: np.ndarray) -> np.ndarray:
    """Outward normal at the closest feature.

    Face interior: the face normal. Edge or vertex: the (angle-weighted)
    average of the normals of the incident triangles, which resolves the
    sign consistently where adjacent faces disagree.
    """
    normals = mesh.face_normals
    on = bary > FEATURE_TOL
    if on.all():
        return normals[tri]
    corner_ids = mesh.triangles[tri]
    vt = mesh.vertex_triangles()
    if on.sum() == 2:
        # closest point on the edge between the two active corners
        u, v = corner_ids[on]
        shared = sorted(set(vt[u]) & set(vt[v]))
        n = normals[shared].sum(axis=0)
    else:
        # closest point at a single corner: angle-weighted average
        vertex = int(corner_ids[on][0])
        incident = vt[vertex]
        weights = []
        for t in incident:
            ids = mesh.triangles[t]
            corner = mesh.vertices[vertex]
            others = [mesh.vertices[i] for i in ids if i != vertex]
            e1 = others[0] - corner
            e2 = others[1] - corner
            cosang = np.clip(
                e1 @ e2 / (np.linalg.norm(e1) * np.linalg.norm(e2)), -1.0, 1.0
            )
            weights.append(np.arccos(cosang))
        n = (np.asarray(weights)[:, None] * normals[incident]).sum(axis=0)
    norm = np.linalg.norm(n)
    if norm == 0.0:
        return normals[tri]
    return n / norm


def signed_distance_to_oriented_surface(p, mesh: TriMesh) -> float:
    """Signed distance to an oriented surface; positive on the normal side."""
    if not mesh.oriented:
        raise ValueError("orientation required")
    hit = point_to_mesh_distance(p, mesh)
    if hit.distance == 0.0:
        return 0.0
    corners = mesh.vertices[mesh.triangles[hit.triangle]]
    v0 = corners[1] - corners[0]
    v1 = corners[2] - corners[0]
    v2 = hit.point - corners[0]
    d00 = v0 @ v0
    d01 = v0 @ v1
    d11 = v1 @ v1
    d20 = v2 @ v0
    d21 = v2 @ v1
    denom = d00 * d11 - d01 * d01
    w1 = (d11 * d20 - d01 * d21) / denom
    w2 = (d00 * d21 - d01 * d20) / denom
    bary = np.array([1.0 - w1 - w2, w1, w2])
    normal = _pseudo_normal(mesh, hit.triangle, bary)
    sign = 1.0 if (np.asarray(p, dtype=float) - hit.point) @ normal >= 0.0 else -1.0
    return sign * hit.distance


def corresponding_point_errors(a, b, mask=None) -> np.ndarray:
    """Per-vertex distances between positionally corresponding meshes.

    ``a`` and ``b`` may be meshes or plain (V, 3) arrays; vertex counts must
    match. An optional boolean ``mask`` restricts the output (order kept).
    """
    va = a.vertices if isinstance(a, TriMesh) else np.asarray(a, dtype=float)
    vb = b.vertices if isinstance(b, TriMesh) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError("no correspondence")
    d = np.linalg.norm(va - vb, axis=1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (len(d),):
            raise ValueError("mask length must match vertex count")
        d = d[mask]
    return d
