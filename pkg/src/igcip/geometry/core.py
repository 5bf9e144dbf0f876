"""Core geometric types: points, rigid transforms, triangle meshes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Triangles thinner than this are useless for distance queries (no stable
# edge/normal basis), so they are rejected at construction time.
MIN_TRIANGLE_AREA = 1e-12


def as_point3(p) -> np.ndarray:
    """Coerce ``p`` to a finite float64 vector of shape (3,)."""
    q = np.asarray(p, dtype=float)
    if q.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {q.shape}")
    if not np.isfinite(q).all():
        raise ValueError("point has non-finite coordinates")
    return q


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion ``x -> R x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        tra = np.asarray(self.translation, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")
        if tra.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if not (np.isfinite(rot).all() and np.isfinite(tra).all()):
            raise ValueError("non-finite transform")
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(rot) <= 0:
            raise ValueError("rotation must have determinant +1")
        rot.setflags(write=False)
        tra.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return the transform equivalent to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)


class TriMesh:
    """Triangulated surface with positional vertex indexing.

    Vertex order is meaningful: meshes of the same family correspond
    vertex-by-vertex, which is what the correspondence error metrics rely on.

    Parameters
    ----------
    vertices : (V, 3) float array, mm
    triangles : (T, 3) int array of vertex indices
    oriented : bool
        When true, triangle winding encodes a meaningful side convention and
        per-triangle unit normals may be used for signed distances.
    """

    def __init__(self, vertices, triangles, oriented: bool = False):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError("vertices must be an (n, 3) array")
        if not np.isfinite(vertices).all():
            raise ValueError("non-finite vertex coordinates")
        if triangles.size:
            if triangles.min() < 0 or triangles.max() >= len(vertices):
                raise ValueError("triangle index out of range")
            corners = vertices[triangles]
            areas = 0.5 * np.linalg.norm(
                np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]),
                axis=1,
            )
            if (areas < MIN_TRIANGLE_AREA).any():
                raise ValueError("degenerate triangle (area below 1e-12 mm^2)")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        self.vertices = vertices
        self.triangles = triangles
        self.oriented = bool(oriented)
        self._bvh = None
        self._face_normals = None
        self._vertex_triangles = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    @property
    def face_normals(self) -> np.ndarray:
        """Unit normals from triangle winding, shape (T, 3)."""
        if self._face_normals is None:
            c = self.corners()
            n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            n.setflags(write=False)
            self._face_normals = n
        return self._face_normals

    @property
    def bvh(self):
        if self._bvh is None:
            from .bvh import Bvh

            self._bvh = Bvh(self.corners())
        return self._bvh

    def vertex_triangles(self) -> list:
        """For each vertex, the list of triangle ids using it."""
        if self._vertex_triangles is None:
            vt = [[] for _ in range(self.n_vertices)]
            for t, (i, j, k) in enumerate(self.triangles):
                vt[i].append(t)
                vt[j].append(t)
                vt[k].append(t)
            self._vertex_triangles = vt
        return self._vertex_triangles

    def transformed(self, transform: RigidTransform) -> "TriMesh":
        return TriMesh(transform.apply(self.vertices), self.triangles, self.oriented)

    def __repr__(self):
        return f"TriMesh({self.n_vertices} vertices, {self.n_triangles} triangles)"
