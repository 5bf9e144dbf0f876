"""ASCII OFF mesh files.

Standard OFF with one extension: an optional comment line ``# orient st2sv``
ahead of the header marks the mesh as oriented (triangle winding encodes the
scala-tympani-to-scala-vestibuli side convention of the basilar membrane
ribbon). Only triangle faces are accepted.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import TriMesh

ORIENT_MARKER = "# orient st2sv"


def write_off(mesh: TriMesh, path) -> None:
    path = Path(path)
    lines = []
    if mesh.oriented:
        lines.append(ORIENT_MARKER)
    lines.append("OFF")
    lines.append(f"{mesh.n_vertices} {mesh.n_triangles} 0")
    for v in mesh.vertices:
        lines.append(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    path.write_text("\n".join(lines) + "\n")


def read_off(path) -> TriMesh:
    path = Path(path)
    oriented = False
    tokens: list[str] = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line == ORIENT_MARKER:
                oriented = True
            continue
        tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    n_vertices = int(tokens[1])
    n_faces = int(tokens[2])
    pos = 4  # skip edge count
    coords = tokens[pos : pos + 3 * n_vertices]
    if len(coords) != 3 * n_vertices:
        raise ValueError(f"{path}: truncated vertex block")
    vertices = np.array(coords, dtype=float).reshape(n_vertices, 3)
    pos += 3 * n_vertices
    triangles = np.empty((n_faces, 3), dtype=np.int64)
    for f in range(n_faces):
        arity = int(tokens[pos])
        if arity != 3:
            raise ValueError(f"{path}: face {f} has {arity} vertices, only triangles supported")
        triangles[f] = [int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])]
        pos += 4
    return TriMesh(vertices, triangles, oriented=oriented)
