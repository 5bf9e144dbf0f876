"""Parametric cochlea phantoms with ground-truth electrode chains.

A phantom is a spiral-swept anatomy: scala tympani (ST) and scala vestibuli
(SV) are half-elliptic tubes separated by the flat basilar membrane (BM)
ribbon, with the active region (AR) band on the modiolar-facing wall. Each
cross-section lies in the vertical plane through the modiolar axis at its
spiral angle, so the analytic insertion angle of any cross-section feature is
the spiral angle itself.

The cochlear coordinate frame (origin on the modiolar axis, axis direction,
zero-angle reference ray, chirality) and the centerline polyline are derived
from mesh geometry, never carried over from a donor anatomy. That makes the
angular-depth metrics sensitive to anatomical error, which the sensitivity
studies depend on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import (
    TriMesh,
    point_to_vertexset_distance,
    signed_distance_to_oriented_surface,
)
from .geometry.core import as_point3

PROVENANCES = ("ground_truth", "m_a1", "m_a2", "m_a3", "synthesized")
CHIRALITIES = ("right", "left")

# Contacts farther than this from the centerline polyline are rejected as
# outside the cochlear region.
CENTERLINE_CAPTURE_MM = 5.0

# Measured angles may drift slightly past the construction range once an
# anatomy has been perturbed; keep them inside [0, 900] with a small snap.
ANGLE_SNAP_DEG = 2.0

# The stored centerline stops short of the apical end so that re-measured
# angles of perturbed anatomies stay within the 900 degree budget.
CENTERLINE_MARGIN_FRAC = 0.08
CENTERLINE_MARGIN_MAX_DEG = 30.0


@dataclass(frozen=True)
class CochlearFrame:
    """Cochlear coordinate frame: origin, modiolar axis, zero-angle ray."""

    origin: np.ndarray
    axis: np.ndarray
    zero_ref: np.ndarray
    chirality: str

    def __post_init__(self):
        origin = as_point3(self.origin)
        axis = as_point3(self.axis)
        zero_ref = as_point3(self.zero_ref)
        if self.chirality not in CHIRALITIES:
            raise ValueError(f"chirality must be one of {CHIRALITIES}")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-6 or abs(np.linalg.norm(zero_ref) - 1.0) > 1e-6:
            raise ValueError("axis and zero_ref must be unit vectors")
        if abs(axis @ zero_ref) > 1e-6:
            raise ValueError("zero_ref must be perpendicular to axis")
        for name, arr in (("origin", origin), ("axis", axis), ("zero_ref", zero_ref)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def in_plane_basis(self):
        """Return ``(x, y)`` with angles measured by ``atan2(q.y, q.x)``.

        ``y`` is chirality-signed so insertion angles increase along the
        winding direction for both ears.
        """
        x = self.zero_ref
        y = np.cross(self.axis, self.zero_ref)
        if self.chirality == "left":
            y = -y
        return x, y

    def as_dict(self):
        return {
            "origin": self.origin.tolist(),
            "axis": self.axis.tolist(),
            "zero_ref": self.zero_ref.tolist(),
            "chirality": self.chirality,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["origin"], dtype=float),
            np.asarray(d["axis"], dtype=float),
            np.asarray(d["zero_ref"], dtype=float),
            d["chirality"],
        )


@dataclass(frozen=True)
class MeshLayout:
    """Ring-grid layout shared by every anatomy of one phantom family.

    Vertex ``(ring, slot)`` of structure ``s`` sits at flat index
    ``ring * points(s) + slot``; the construction spiral angle of each ring is
    recorded so frame fitting can use it as the angular abscissa.
    """

    rings: int
    st_points: int
    sv_points: int
    bm_points: int
    ar_points: int
    ring_angles_deg: tuple

    def __post_init__(self):
        if self.rings < 4:
            raise ValueError("need at least 4 rings")
        for n in (self.st_points, self.sv_points, self.bm_points, self.ar_points):
            if n < 2:
                raise ValueError("each ring needs at least 2 points")
        if len(self.ring_angles_deg) != self.rings:
            raise ValueError("one construction angle per ring required")
        object.__setattr__(self, "ring_angles_deg", tuple(float(a) for a in self.ring_angles_deg))

    def counts(self):
        return {
            "st": self.rings * self.st_points,
            "sv": self.rings * self.sv_points,
            "ar": self.rings * self.ar_points,
            "bm": self.rings * self.bm_points,
        }

    def as_dict(self):
        return {
            "rings": self.rings,
            "st_points": self.st_points,
            "sv_points": self.sv_points,
            "bm_points": self.bm_points,
            "ar_points": self.ar_points,
            "ring_angles_deg": list(self.ring_angles_deg),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            rings=int(d["rings"]),
            st_points=int(d["st_points"]),
            sv_points=int(d["sv_points"]),
            bm_points=int(d["bm_points"]),
            ar_points=int(d["ar_points"]),
            ring_angles_deg=tuple(d["ring_angles_deg"]),
        )


STRUCTURES = ("st", "sv", "ar", "bm")


@dataclass(frozen=True)
class CochleaAnatomy:
    """One segmented (or synthetic) cochlea: four surfaces plus derived data."""

    st: TriMesh
    sv: TriMesh
    ar: TriMesh
    bm: TriMesh
    frame: CochlearFrame
    hook_landmark: np.ndarray
    centerline_deg: np.ndarray
    centerline_points: np.ndarray
    provenance: str
    layout: MeshLayout

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        counts = self.layout.counts()
        for name in STRUCTURES:
            mesh = getattr(self, name)
            if mesh.n_vertices != counts[name]:
                raise ValueError(f"{name} vertex count does not match layout")
        if not self.bm.oriented:
            raise ValueError("bm ribbon must be oriented")
        hook = as_point3(self.hook_landmark)
        hook.setflags(write=False)
        object.__setattr__(self, "hook_landmark", hook)
        deg = np.asarray(self.centerline_deg, dtype=float)
        pts = np.asarray(self.centerline_points, dtype=float)
        if deg.ndim != 1 or pts.shape != (len(deg), 3) or len(deg) < 2:
            raise ValueError("centerline must pair angles with points")
        if abs(deg[0]) > 1e-9:
            raise ValueError("centerline must start at 0 degrees")
        if not (np.diff(deg) > 0).all():
            raise ValueError("centerline angles must be strictly increasing")
        if deg[-1] > 900.0 + 1e-9:
            raise ValueError("centerline exceeds 900 degrees")
        deg.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "centerline_deg", deg)
        object.__setattr__(self, "centerline_points", pts)

    def structures(self):
        return {name: getattr(self, name) for name in STRUCTURES}

    def all_vertices(self) -> np.ndarray:
        """Concatenated vertices in canonical structure order (st, sv, ar, bm)."""
        return np.concatenate([getattr(self, n).vertices for n in STRUCTURES])

    def structure_ranges(self):
        ranges = {}
        start = 0
        for name in STRUCTURES:
            stop = start + getattr(self, name).n_vertices
            ranges[name] = (start, stop)
            start = stop
        return ranges

    def with_vertices(self, vertices: np.ndarray, provenance: str | None = None) -> "CochleaAnatomy":
        """Rebuild this anatomy with new vertex positions (same topology).

        The frame, centerline and hook landmark are re-derived from the new
        geometry.
        """
        vertices = np.asarray(vertices, dtype=float)
        return anatomy_from_vertices(
            vertices,
            layout=self.layout,
            topology={n: getattr(self, n).triangles for n in STRUCTURES},
            chirality=self.frame.chirality,
            provenance=provenance or self.provenance,
        )


class Phantom(NamedTuple):
    anatomy: CochleaAnatomy
    gl: "ElectrodeLocalization"  # noqa: F821  (import cycle: see localization module)


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the phantom family.

    Geometry is in mm and degrees. ``variation`` scales the seeded anatomical
    jitter applied by :func:`generate_phantom`; 0 makes every seed produce the
    same anatomy.
    """

    turns_deg: float = 900.0
    base_radius: float = 3.2
    apex_radius: float = 1.3
    # tall enough that the gap between successive turns clearly exceeds the
    # contact spacing; otherwise cross-turn hops look like valid chain steps
    height_rise: float = 6.5
    half_width_base: float = 0.85
    half_width_apex: float = 0.40
    st_depth_base: float = 0.75
    st_depth_apex: float = 0.35
    sv_depth_base: float = 0.60
    sv_depth_apex: float = 0.30
    contact_count: int = 12
    nominal_contact_spacing: float = 1.7
    insertion_depth_deg: float = 500.0
    chirality: str = "right"
    contact_lateral_frac: float = 0.45
    contact_depth_frac: float = 0.40
    rings_per_turn: int = 64
    st_ring_points: int = 13
    sv_ring_points: int = 13
    bm_ring_points: int = 4
    ar_ring_points: int = 7
    ar_band_rad: float = 0.5
    variation: float = 1.0

    def __post_init__(self):
        if self.contact_count < 2:
            raise ValueError("contact_count must be at least 2")
        if not 0.0 < self.turns_deg <= 900.0:
            raise ValueError("turns_deg must be in (0, 900]")
        if not 0.0 < self.insertion_depth_deg <= self.turns_deg:
            raise ValueError("insertion_depth_deg must be in (0, turns_deg]")
        for name in (
            "base_radius",
            "apex_radius",
            "height_rise",
            "half_width_base",
            "half_width_apex",
            "st_depth_base",
            "st_depth_apex",
            "sv_depth_base",
            "sv_depth_apex",
            "nominal_contact_spacing",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.chirality not in CHIRALITIES:
            raise ValueError(f"chirality must be one of {CHIRALITIES}")
        if self.variation < 0:
            raise ValueError("variation must be non-negative")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class FrequencyMapParams:
    """Place-frequency map ``f = scale * (10 ** (exponent * (1 - doi/total)) - shift)``."""

    scale_hz: float = 165.4
    exponent: float = 2.1
    shift: float = 0.88
    total_deg: float = 900.0

    def __post_init__(self):
        if self.scale_hz <= 0 or self.exponent <= 0 or self.total_deg <= 0:
            raise ValueError("scale_hz, exponent and total_deg must be positive")
        if not 0.0 <= self.shift < 1.0:
            raise ValueError("shift must be in [0, 1)")


DEFAULT_FREQUENCY_MAP = FrequencyMapParams()


def place_frequency(doi_deg, params: FrequencyMapParams = DEFAULT_FREQUENCY_MAP):
    """Greenwood-form place frequency (Hz) at angular insertion depth."""
    doi = np.asarray(doi_deg, dtype=float)
    if (doi < 0).any() or (doi > params.total_deg).any():
        raise ValueError(f"doi outside [0, {params.total_deg}] degrees")
    f = params.scale_hz * (10.0 ** (params.exponent * (1.0 - doi / params.total_deg)) - params.shift)
    if np.isscalar(doi_deg) or np.ndim(doi_deg) == 0:
        return float(f)
    return f


# ---------------------------------------------------------------------------
# frame and centerline derivation


def _grid_mesh(points: np.ndarray, flip: bool = False) -> np.ndarray:
    """Quad-grid triangulation of a (rings, m, 3) point lattice."""
    n, m, _ = points.shape
    idx = np.arange(n * m).reshape(n, m)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    if flip:
        tris = np.concatenate([np.stack([a, c, b], 1), np.stack([a, d, c], 1)])
    else:
        tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    return tris


def _perp_unit(v: np.ndarray) -> np.ndarray:
    k = int(np.argmin(np.abs(v)))
    e = np.zeros(3)
    e[k] = 1.0
    p = np.cross(v, e)
    return p / np.linalg.norm(p)


def _spiral_center_fit(p2: np.ndarray, angles_rad: np.ndarray):
    """Fit the planar spiral center and the common phase offset.

    Ring centroids satisfy ``p_i = o + r_i * u(angle_i + delta)`` with free
    radii ``r_i > 0``; eliminating the radii leaves the residual of ``p_i - o``
    against the perpendicular of ``u``. For each candidate ``delta`` the center
    is a closed-form 2x2 least-squares solve; ``delta`` itself is found by a
    grid scan plus golden-section refinement.
    """

    def solve(delta: float):
        ang = angles_rad + delta
        w = np.stack([-np.sin(ang), np.cos(ang)], axis=1)
        pw = (p2 * w).sum(axis=1)
        a11 = (w[:, 0] ** 2).sum()
        a12 = (w[:, 0] * w[:, 1]).sum()
        a22 = (w[:, 1] ** 2).sum()
        r1 = (pw * w[:, 0]).sum()
        r2 = (pw * w[:, 1]).sum()
        det = a11 * a22 - a12 * a12
        if abs(det) < 1e-12:
            return np.zeros(2), np.inf, -1.0
        o = np.array([(a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det])
        resid = ((pw - w @ o) ** 2).sum()
        u = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        mean_radius = float(((p2 - o) * u).sum(axis=1).mean())
        return o, float(resid), mean_radius

    grid = np.linspace(0.0, 2.0 * np.pi, 721)[:-1]
    best_delta, best_resid = 0.0, np.inf
    for delta in grid:
        _, resid, mean_radius = solve(delta)
        if mean_radius > 0 and resid < best_resid:
            best_resid, best_delta = resid, delta
    if not np.isfinite(best_resid):
        raise ValueError("spiral center fit failed")

    step = grid[1] - grid[0]
    lo, hi = best_delta - step, best_delta + step
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1 = solve(x1)[1]
    f2 = solve(x2)[1]
    for _ in range(70):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = solve(x1)[1]
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = solve(x2)[1]
    delta = (lo + hi) / 2.0
    o, resid, mean_radius = solve(delta)
    if mean_radius <= 0:
        o, resid, mean_radius = solve(best_delta)
        delta = best_delta
    return o, delta


def derive_cochlear_geometry(st_vertices, sv_vertices, layout: MeshLayout, chirality: str):
    """Derive frame, centerline and hook landmark from scala geometry.

    Returns ``(frame, centerline_deg, centerline_points, hook_landmark)``.
    The zero-angle ray passes through the first ring centroid, so the first
    centerline angle is exactly 0.
    """
    n = layout.rings
    st = np.asarray(st_vertices, dtype=float).reshape(n, layout.st_points, 3)
    sv = np.asarray(sv_vertices, dtype=float).reshape(n, layout.sv_points, 3)
    cent = (st.sum(axis=1) + sv.sum(axis=1)) / (layout.st_points + layout.sv_points)

    mid = cent.mean(axis=0)
    v = cent - mid
    winding = np.cross(v[:-1], v[1:]).sum(axis=0)
    norm = np.linalg.norm(winding)
    if norm < 1e-9:
        raise ValueError("degenerate centerline: no winding axis")
    axis_w = winding / norm
    axis = axis_w if chirality == "right" else -axis_w

    e1 = _perp_unit(axis_w)
    e2 = np.cross(axis_w, e1)
    p2 = np.stack([v @ e1, v @ e2], axis=1)
    angles_rad = np.radians(np.asarray(layout.ring_angles_deg))
    o2, _ = _spiral_center_fit(p2, angles_rad)

    origin = mid + o2[0] * e1 + o2[1] * e2
    origin = origin + ((cent[0] - origin) @ axis_w) * axis_w
    q0 = cent[0] - origin
    q0 = q0 - (q0 @ axis_w) * axis_w
    r0 = np.linalg.norm(q0)
    if r0 < 1e-9:
        raise ValueError("first centerline sample coincides with the axis")
    zero_ref = q0 / r0
    frame = CochlearFrame(origin, axis, zero_ref, chirality)

    x, y = frame.in_plane_basis()
    q = cent - origin
    raw = np.degrees(np.arctan2(q @ y, q @ x))
    deg = np.empty(n)
    deg[0] = 0.0
    for i in range(1, n):
        delta = raw[i] - raw[i - 1]
        delta = (delta + 180.0) % 360.0 - 180.0
        deg[i] = deg[i - 1] + delta
    if not (np.diff(deg) > 0).all():
        raise ValueError("centerline angles not increasing")

    span = layout.ring_angles_deg[-1]
    margin = min(CENTERLINE_MARGIN_MAX_DEG, CENTERLINE_MARGIN_FRAC * span)
    keep = np.asarray(layout.ring_angles_deg) <= span - margin
    if keep.sum() < 2:
        keep = np.ones(n, dtype=bool)
    hook = sv[0].mean(axis=0)
    return frame, deg[keep], cent[keep], hook


def anatomy_from_vertices(vertices, layout: MeshLayout, topology, chirality, provenance):
    """Assemble a :class:`CochleaAnatomy` from concatenated vertices."""
    vertices = np.asarray(vertices, dtype=float)
    counts = layout.counts()
    total = sum(counts.values())
    if vertices.shape != (total, 3):
        raise ValueError(f"expected {total} vertices, got {vertices.shape}")
    parts = {}
    start = 0
    for name in STRUCTURES:
        stop = start + counts[name]
        parts[name] = vertices[start:stop]
        start = stop
    frame, deg, pts, hook = derive_cochlear_geometry(parts["st"], parts["sv"], layout, chirality)
    meshes = {
        name: TriMesh(parts[name], topology[name], oriented=(name == "bm"))
        for name in STRUCTURES
    }
    return CochleaAnatomy(
        st=meshes["st"],
        sv=meshes["sv"],
        ar=meshes["ar"],
        bm=meshes["bm"],
        frame=frame,
        hook_landmark=hook,
        centerline_deg=deg,
        centerline_points=pts,
        provenance=provenance,
        layout=layout,
    )


# ---------------------------------------------------------------------------
# phantom generation


def _clipped_normal(rng, sigma):
    # +-2 sigma clip keeps extreme seeds from producing invalid anatomies
    return sigma * float(np.clip(rng.standard_normal(), -2.0, 2.0))


def generate_phantom(spec: PhantomSpec, seed) -> Phantom:
    """Generate one phantom anatomy plus its ground-truth electrode chain.

    Deterministic given ``(spec, seed)``. The seeded jitter perturbs global
    proportions (radii, height, scala cross-sections) and adds smooth
    low-order modulation along the spiral, producing a population with
    anatomically plausible variation but identical mesh topology.
    """
    from .localization import ElectrodeLocalization  # import cycle: GL is a localization

    rng = np.random.default_rng(seed)
    var = spec.variation

    base_r = spec.base_radius * (1.0 + _clipped_normal(rng, 0.08 * var))
    apex_r = spec.apex_radius * (1.0 + _clipped_normal(rng, 0.12 * var))
    height = spec.height_rise * (1.0 + _clipped_normal(rng, 0.12 * var))
    width_b = spec.half_width_base * (1.0 + _clipped_normal(rng, 0.10 * var))
    width_a = spec.half_width_apex * (1.0 + _clipped_normal(rng, 0.10 * var))
    st_b = spec.st_depth_base * (1.0 + _clipped_normal(rng, 0.10 * var))
    st_a = spec.st_depth_apex * (1.0 + _clipped_normal(rng, 0.10 * var))
    sv_b = spec.sv_depth_base * (1.0 + _clipped_normal(rng, 0.10 * var))
    sv_a = spec.sv_depth_apex * (1.0 + _clipped_normal(rng, 0.10 * var))

    rad_amp1 = _clipped_normal(rng, 0.05 * var)
    rad_amp2 = _clipped_normal(rng, 0.05 * var)
    ph1, ph2, ph3, ph4 = rng.uniform(0.0, 2.0 * np.pi, size=4)
    height_amp = _clipped_normal(rng, 0.05 * var)
    width_amp = _clipped_normal(rng, 0.06 * var)

    sgn = 1.0 if spec.chirality == "right" else -1.0
    turns = spec.turns_deg

    def radius(u):
        mod = 1.0 + rad_amp1 * np.sin(2.0 * np.pi * u + ph1) + rad_amp2 * np.sin(4.0 * np.pi * u + ph2)
        return base_r * (apex_r / base_r) ** u * mod

    def elevation(u):
        return height * u + height_amp * height * np.sin(2.0 * np.pi * u + ph3)

    def half_width(u):
        mod = 1.0 + width_amp * np.sin(2.0 * np.pi * u + ph4)
        return (width_b + (width_a - width_b) * u) * mod

    def st_depth(u):
        return st_b + (st_a - st_b) * u

    def sv_depth(u):
        return sv_b + (sv_a - sv_b) * u

    def cross_section_point(angle_deg, cs_u, cs_v):
        """World point at spiral angle with in-plane offsets (radial, vertical)."""
        u = angle_deg / turns
        phi = np.radians(angle_deg)
        e_r = np.stack([np.cos(phi), sgn * np.sin(phi), np.zeros_like(phi)], axis=-1)
        center = radius(u)[..., None] * e_r
        center = center + np.stack(
            [np.zeros_like(phi), np.zeros_like(phi), elevation(u)], axis=-1
        )
        return center + cs_u[..., None] * e_r + np.stack(
            [np.zeros_like(cs_v), np.zeros_like(cs_v), cs_v], axis=-1
        )

    n_rings = int(round(turns / 360.0 * spec.rings_per_turn)) + 1
    ring_angles = np.linspace(0.0, turns, n_rings)
    u = ring_angles / turns
    a = half_width(u)

    psi_sv = np.linspace(0.0, np.pi, spec.sv_ring_points)
    psi_st = np.linspace(np.pi, 2.0 * np.pi, spec.st_ring_points)
    chi = np.linspace(-spec.ar_band_rad, spec.ar_band_rad, spec.ar_ring_points)
    bm_t = np.linspace(-1.0, 1.0, spec.bm_ring_points)

    angle_grid = ring_angles[:, None]

    sv_u = a[:, None] * np.cos(psi_sv)[None, :]
    sv_v = sv_depth(u)[:, None] * np.sin(psi_sv)[None, :]
    sv_pts = cross_section_point(np.broadcast_to(angle_grid, sv_u.shape), sv_u, sv_v)

    st_u = a[:, None] * np.cos(psi_st)[None, :]
    st_v = st_depth(u)[:, None] * np.sin(psi_st)[None, :]
    st_pts = cross_section_point(np.broadcast_to(angle_grid, st_u.shape), st_u, st_v)

    ar_u = -a[:, None] * np.cos(chi)[None, :]
    ar_v = np.where(
        chi[None, :] < 0,
        sv_depth(u)[:, None] * np.sin(-chi)[None, :],
        -st_depth(u)[:, None] * np.sin(chi)[None, :],
    )
    ar_pts = cross_section_point(np.broadcast_to(angle_grid, ar_u.shape), ar_u, ar_v)

    bm_u = a[:, None] * bm_t[None, :]
    bm_v = np.zeros_like(bm_u)
    bm_pts = cross_section_point(np.broadcast_to(angle_grid, bm_u.shape), bm_u, bm_v)

    layout = MeshLayout(
        rings=n_rings,
        st_points=spec.st_ring_points,
        sv_points=spec.sv_ring_points,
        bm_points=spec.bm_ring_points,
        ar_points=spec.ar_ring_points,
        ring_angles_deg=tuple(ring_angles),
    )

    # BM winding must encode the ST-to-SV (upward) side convention
    bm_tris = _grid_mesh(bm_pts)
    probe = TriMesh(bm_pts.reshape(-1, 3), bm_tris)
    if probe.face_normals[:, 2].mean() < 0:
        bm_tris = _grid_mesh(bm_pts, flip=True)

    topology = {
        "st": _grid_mesh(st_pts),
        "sv": _grid_mesh(sv_pts),
        "ar": _grid_mesh(ar_pts),
        "bm": bm_tris,
    }
    vertices = np.concatenate(
        [st_pts.reshape(-1, 3), sv_pts.reshape(-1, 3), ar_pts.reshape(-1, 3), bm_pts.reshape(-1, 3)]
    )
    anatomy = anatomy_from_vertices(
        vertices, layout, topology, spec.chirality, provenance="ground_truth"
    )

    # ground-truth contacts: walk back from the deepest position at fixed
    # arc-length spacing along the intra-ST contact path
    dense = np.linspace(0.0, spec.insertion_depth_deg, max(int(spec.insertion_depth_deg * 2), 64))
    du = dense / turns
    path = cross_section_point(
        dense,
        spec.contact_lateral_frac * half_width(du),
        -spec.contact_depth_frac * st_depth(du),
    )
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = arc[-1] - spec.nominal_contact_spacing * np.arange(spec.contact_count)
    if (targets <= 0.0).any():
        raise ValueError("array does not fit")
    contact_angles = np.interp(targets[::-1], arc, dense)
    cu = contact_angles / turns
    contacts = cross_section_point(
        contact_angles,
        spec.contact_lateral_frac * half_width(cu),
        -spec.contact_depth_frac * st_depth(cu),
    )
    gl = ElectrodeLocalization(
        contacts, array_model=f"phantom-{spec.contact_count}", provenance="GL"
    )
    return Phantom(anatomy, gl)


# ---------------------------------------------------------------------------
# metrics


def _doi_of_points(points: np.ndarray, anatomy: CochleaAnatomy) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    d = cdist(points, anatomy.centerline_points)
    nearest = d.argmin(axis=1)
    if (d[np.arange(len(points)), nearest] > CENTERLINE_CAPTURE_MM).any():
        raise ValueError("contact outside cochlear region")
    x, y = anatomy.frame.in_plane_basis()
    q = points - anatomy.frame.origin
    raw = np.degrees(np.arctan2(q @ y, q @ x)) % 360.0
    anchor = anatomy.centerline_deg[nearest]
    turn = np.round((anchor - raw) / 360.0)
    doi = raw + 360.0 * turn
    low = (doi < 0.0) & (doi >= -ANGLE_SNAP_DEG)
    high = (doi > 900.0) & (doi <= 900.0 + ANGLE_SNAP_DEG)
    doi = np.where(low, 0.0, doi)
    doi = np.where(high, 900.0, doi)
    if ((doi < 0.0) | (doi > 900.0)).any():
        raise ValueError("contact outside cochlear region")
    return doi


def doi_sequence(loc, anatomy: CochleaAnatomy) -> np.ndarray:
    """Angular depth of insertion (degrees, unwrapped to [0, 900]) per contact."""
    return _doi_of_points(loc.contacts, anatomy)


def point_doi(p, anatomy: CochleaAnatomy) -> float:
    return float(_doi_of_points(as_point3(p)[None, :], anatomy)[0])


def dtom(p, anatomy: CochleaAnatomy) -> float:
    """Distance (mm) from a point to the nearest active-region vertex."""
    return point_to_vertexset_distance(p, anatomy.ar).distance


def dtobm(p, anatomy: CochleaAnatomy) -> float:
    """Signed distance (mm) to the BM ribbon; negative on the ST side."""
    return signed_distance_to_oriented_surface(p, anatomy.bm)


def dtom_sequence(loc, anatomy: CochleaAnatomy) -> np.ndarray:
    """Vectorized :func:`dtom` over a localization's contacts."""
    return cdist(loc.contacts, anatomy.ar.vertices).min(axis=1)


def dtobm_sequence(loc, anatomy: CochleaAnatomy) -> np.ndarray:
    return np.array(
        [signed_distance_to_oriented_surface(p, anatomy.bm) for p in loc.contacts]
    )


# ---------------------------------------------------------------------------
# bundle I/O


def save_phantom(directory, phantom: Phantom) -> None:
    from .geometry import write_off
    from .localization import save_localization_csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    anatomy = phantom.anatomy
    for name in STRUCTURES:
        write_off(getattr(anatomy, name), directory / f"anatomy_{name}.off")
    (directory / "frame.json").write_text(json.dumps(anatomy.frame.as_dict(), indent=1))
    rows = ["s_deg,x,y,z"]
    for s, p in zip(anatomy.centerline_deg, anatomy.centerline_points):
        rows.append(f"{float(s)!r},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}")
    (directory / "centerline.csv").write_text("\n".join(rows) + "\n")
    save_localization_csv(phantom.gl, directory / "gl.csv")
    meta = {
        "hook_landmark": anatomy.hook_landmark.tolist(),
        "provenance": anatomy.provenance,
        "layout": anatomy.layout.as_dict(),
        "array_model": phantom.gl.array_model,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))


def load_phantom(directory) -> Phantom:
    from .geometry import read_off
    from .localization import load_localization_csv

    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    layout = MeshLayout.from_dict(meta["layout"])
    frame = CochlearFrame.from_dict(json.loads((directory / "frame.json").read_text()))
    lines = (directory / "centerline.csv").read_text().strip().splitlines()
    if lines[0] != "s_deg,x,y,z":
        raise ValueError("bad centerline header")
    table = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    meshes = {name: read_off(directory / f"anatomy_{name}.off") for name in STRUCTURES}
    anatomy = CochleaAnatomy(
        st=meshes["st"],
        sv=meshes["sv"],
        ar=meshes["ar"],
        bm=meshes["bm"],
        frame=frame,
        hook_landmark=np.asarray(meta["hook_landmark"], dtype=float),
        centerline_deg=table[:, 0],
        centerline_points=table[:, 1:4],
        provenance=meta["provenance"],
        layout=layout,
    )
    gl = load_localization_csv(
        directory / "gl.csv", array_model=meta["array_model"], provenance="GL"
    )
    return Phantom(anatomy, gl)
