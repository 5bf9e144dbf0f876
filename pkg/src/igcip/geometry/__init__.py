"""Geometry primitives. All coordinates are millimetres.

Distance queries are exact: each candidate triangle is handled with the
closest-point-on-triangle construction, and the accelerated path (an
axis-aligned bounding-volume hierarchy) prunes candidates without ever
approximating the distance itself.
"""

from .core import RigidTransform, TriMesh, as_point3
from .align import similarity_align
from .closest import closest_on_triangles
from .distances import (
    SurfaceHit,
    VertexHit,
    brute_force_point_to_mesh,
    closest_points_on_mesh,
    corresponding_point_errors,
    point_to_mesh_distance,
    point_to_vertexset_distance,
    signed_distance_to_oriented_surface,
)
from .off_io import read_off, write_off
