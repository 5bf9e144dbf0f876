"""Electrode localization at desk scale.

Synthesizes post-implantation voxel volumes from ground-truth contact chains
(metal footprints on a silicone carrier, partial-volume rendered, blurred and
noised), extracts candidate contact positions (COIs), and assigns an ordered
chain of candidates by exact branch-and-bound search over a chain-decomposable
cost. Also provides the localization error summaries, the repeated-expert
convergence rule and the migration check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.ndimage import gaussian_filter, label

from .geometry import similarity_align
from .geometry.core import as_point3

PROVENANCES = ("GL", "AL", "IL", "other")
MIN_CONTACT_SPACING = 0.1
MAX_CONTACT_SPACING = 3.0

# Contact footprint (mm): square pad transverse to the array, thin along it.
CONTACT_HALF_EXTENTS = (0.15, 0.15, 0.05)
CONT_HX, CONT_HY, CONT_HZ = CONTACT_HALF_EXTENTS
CONTACT_INTENSITY = 2400.0
CARRIER_RADIUS = 0.12
CARRIER_INTENSITY = 300.0
SUPERSAMPLE = 3

# Isotropic per-axis sigma (mm) whose 3D displacement norm averages 0.10 mm,
# the expected magnitude of a single expert image-based localization error:
# E|N3(0, s^2 I)| = 2 s sqrt(2/pi).
IL_SIGMA = 0.0627


@dataclass(frozen=True)
class ElectrodeLocalization:
    """Ordered contact centroids (base to apex) with provenance."""

    contacts: np.ndarray
    array_model: str = "unknown"
    provenance: str = "other"

    def __post_init__(self):
        contacts = np.asarray(self.contacts, dtype=float)
        if contacts.ndim != 2 or contacts.shape[1] != 3 or len(contacts) < 2:
            raise ValueError("need at least 2 contacts of shape (n, 3)")
        if not np.isfinite(contacts).all():
            raise ValueError("contacts must be finite")
        spacing = np.linalg.norm(np.diff(contacts, axis=0), axis=1)
        if (spacing <= MIN_CONTACT_SPACING).any() or (spacing > MAX_CONTACT_SPACING).any():
            raise ValueError(
                f"contact spacing out of ({MIN_CONTACT_SPACING}, {MAX_CONTACT_SPACING}] mm"
            )
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        contacts = np.ascontiguousarray(contacts)
        contacts.setflags(write=False)
        object.__setattr__(self, "contacts", contacts)

    @property
    def n_contacts(self) -> int:
        return len(self.contacts)


@dataclass(frozen=True)
class ErrorSummary:
    """Per-item distances plus mean/median/max/population std."""

    per_item: np.ndarray
    mean: float
    median: float
    max: float
    std: float

    @classmethod
    def from_errors(cls, values) -> "ErrorSummary":
        values = np.asarray(values, dtype=float).ravel()
        if len(values) == 0:
            return cls(per_item=values, mean=0.0, median=0.0, max=0.0, std=0.0)
        if (values < 0).any():
            raise ValueError("errors must be nonnegative")
        return cls(
            per_item=values,
            mean=float(values.mean()),
            median=float(np.median(values)),
            max=float(values.max()),
            std=float(values.std()),
        )

    def as_dict(self):
        return {
            "per_item": self.per_item.tolist(),
            "mean": self.mean,
            "median": self.median,
            "max": self.max,
            "std": self.std,
        }


@dataclass(frozen=True)
class VoxelVolume:
    dims: tuple
    spacing: np.ndarray
    origin: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        spacing = np.asarray(self.spacing, dtype=float).ravel()
        if spacing.shape != (3,) or (spacing <= 0).any():
            raise ValueError("spacing must be 3 positive values")
        origin = as_point3(self.origin)
        vals = np.asarray(self.intensities, dtype=np.float32)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError("dims must be 3 positive integers")
        if vals.shape != dims:
            raise ValueError("intensity grid does not match dims")
        if not np.isfinite(vals).all():
            raise ValueError("intensities must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "intensities", vals)

    def voxel_centers_world(self, idx: np.ndarray) -> np.ndarray:
        """World coordinates of voxel centers given integer index rows."""
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.spacing


class Candidate(NamedTuple):
    position: np.ndarray
    score: float


@dataclass(frozen=True)
class CoiParams:
    percentile: float = 99.5
    footprint_voxels: int | None = None

    def __post_init__(self):
        if not 0.0 < self.percentile < 100.0:
            raise ValueError("percentile must be in (0, 100)")
        if self.footprint_voxels is not None and self.footprint_voxels < 1:
            raise ValueError("footprint_voxels must be positive")


@dataclass(frozen=True)
class ChainWeights:
    intensity: float = 1.0
    spacing: float = 10.0

    def __post_init__(self):
        if self.intensity < 0 or self.spacing < 0:
            raise ValueError("weights must be nonnegative")


# ---------------------------------------------------------------------------
# volume synthesis


def synthesize_post_volume(
    gl: ElectrodeLocalization,
    spacing=0.3,
    psf_sigma: float = 0.15,
    noise_sigma: float = 0.0,
    seed=0,
    bounds=None,
    pad: float = 1.0,
) -> VoxelVolume:
    """Render a contact chain into a voxel volume.

    Each contact becomes a 0.3 x 0.3 x 0.1 mm metal pad oriented along the
    local chain tangent; a thin cylindrical carrier connects consecutive
    contacts. Rendering is supersampled 3x per axis and average-pooled, so
    partial-volume fractions are honest, then blurred by a Gaussian PSF and
    corrupted by additive Gaussian noise. Deterministic given ``seed``.
    """
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float).ravel(), (3,)).copy()
    if (spacing <= 0).any():
        raise ValueError("spacing must be positive")
    if psf_sigma < 0 or noise_sigma < 0:
        raise ValueError("psf_sigma and noise_sigma must be nonnegative")
    pts = gl.contacts
    if bounds is None:
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
    else:
        lo = as_point3(bounds[0])
        hi = as_point3(bounds[1])
        if ((pts < lo) | (pts > hi)).any():
            raise ValueError("contacts outside volume extent")
    dims = np.maximum(np.ceil((hi - lo) / spacing).astype(int), 1)
    fine = spacing / SUPERSAMPLE
    fdims = dims * SUPERSAMPLE
    axes = [lo[k] + (np.arange(fdims[k]) + 0.5) * fine[k] for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    vol = np.zeros(len(coords), dtype=np.float32)

    # carrier first so contact pads overwrite it where they overlap
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        seg_len2 = float(seg @ seg)
        t = np.clip(((coords - a) @ seg) / seg_len2, 0.0, 1.0)
        d2 = ((coords - (a + t[:, None] * seg)) ** 2).sum(axis=1)
        np.maximum(vol, np.where(d2 <= CARRIER_RADIUS**2, CARRIER_INTENSITY, 0.0), out=vol)

    for i, p in enumerate(pts):
        lo_i = max(i - 1, 0)
        hi_i = min(i + 1, len(pts) - 1)
        tangent = pts[hi_i] - pts[lo_i]
        tangent = tangent / np.linalg.norm(tangent)
        helper = np.zeros(3)
        helper[int(np.argmin(np.abs(tangent)))] = 1.0
        n1 = np.cross(tangent, helper)
        n1 /= np.linalg.norm(n1)
        n2 = np.cross(tangent, n1)
        d = coords - p
        inside = (
            (np.abs(d @ n1) <= CONT_HX)
            & (np.abs(d @ n2) <= CONT_HY)
            & (np.abs(d @ tangent) <= CONT_HZ)
        )
        np.maximum(vol, np.where(inside, CONTACT_INTENSITY, 0.0), out=vol)

    vol = vol.reshape(fdims[0], fdims[1], fdims[2])
    if psf_sigma > 0:
        vol = gaussian_filter(vol, sigma=psf_sigma / fine, mode="constant")
    vol = vol.reshape(dims[0], SUPERSAMPLE, dims[1], SUPERSAMPLE, dims[2], SUPERSAMPLE)
    vol = vol.mean(axis=(1, 3, 5))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        vol = vol + rng.normal(0.0, noise_sigma, size=vol.shape)
    return VoxelVolume(
        dims=tuple(int(d) for d in dims),
        spacing=spacing,
        origin=lo,
        intensities=vol.astype(np.float32),
    )


def save_volume(volume: VoxelVolume, path) -> None:
    """Flat binary float32 plus a JSON sidecar with dims/spacing/origin."""
    path = Path(path)
    volume.intensities.astype("<f4").tofile(path)
    sidecar = {
        "dims": list(volume.dims),
        "spacing": volume.spacing.tolist(),
        "origin": volume.origin.tolist(),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1))


def load_volume(path) -> VoxelVolume:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    dims = tuple(int(d) for d in sidecar["dims"])
    raw = np.fromfile(path, dtype="<f4").reshape(dims)
    return VoxelVolume(
        dims=dims,
        spacing=np.asarray(sidecar["spacing"], dtype=float),
        origin=np.asarray(sidecar["origin"], dtype=float),
        intensities=raw,
    )


# ---------------------------------------------------------------------------
# candidate extraction


def extract_cois(volume: VoxelVolume, params: CoiParams = CoiParams()) -> list:
    """Extract candidate contact centroids from a volume.

    Thresholds at the given intensity percentile, labels 26-connected
    components, and reports intensity-weighted centroids. Components more than
    twice the single-contact footprint (median component size when not given)
    are split by k-means on voxel coordinates with k = round(size/footprint).
    """
    vals = volume.intensities
    threshold = float(np.percentile(vals, params.percentile))
    mask = vals > threshold
    if not mask.any():
        raise ValueError("no candidates")
    labels, n_comp = label(mask, structure=np.ones((3, 3, 3), dtype=int))
    comp_idx = [np.argwhere(labels == c + 1) for c in range(n_comp)]
    sizes = np.array([len(ix) for ix in comp_idx])
    if params.footprint_voxels is not None:
        footprint = params.footprint_voxels
    else:
        # median over multi-voxel components, so isolated noise voxels cannot
        # drag the footprint to 1 and shatter every real component
        multi = sizes[sizes > 1]
        footprint = max(int(np.median(multi if len(multi) else sizes)), 1)

    out = []
    for ix in comp_idx:
        weights = vals[tuple(ix.T)].astype(float)
        world = volume.voxel_centers_world(ix)
        k = int(round(len(ix) / footprint))
        if len(ix) > 2 * footprint and k > 1:
            k = min(k, len(ix))
            _, assign = kmeans2(world, k, minit="++", seed=1234)
            for j in range(k):
                sel = assign == j
                if not sel.any():
                    continue
                w = weights[sel]
                pos = (world[sel] * w[:, None]).sum(axis=0) / w.sum()
                out.append(Candidate(position=pos, score=float(w.mean())))
        else:
            pos = (world * weights[:, None]).sum(axis=0) / weights.sum()
            out.append(Candidate(position=pos, score=float(weights.mean())))
    return out


# ---------------------------------------------------------------------------
# chain assignment


def localize_array(
    cands,
    n_contacts: int,
    nominal_spacing: float,
    weights: ChainWeights = ChainWeights(),
    anatomy=None,
    array_model: str = "unknown",
) -> ElectrodeLocalization:
    """Assign an ordered chain of distinct candidates minimizing the chain cost.

    Cost = sum of node terms (-w_int * score) plus consecutive-pair terms
    w_sp * (dist - nominal_spacing)^2, minimized exactly. A slot-indexed
    lower bound (dynamic program that ignores the distinctness constraint,
    which is admissible because revisits can only lower the bound) drives a
    depth-first branch-and-bound in candidate index order, so ties resolve to
    the lexicographically smallest chain.

    With ``anatomy`` given, the search is restricted to chains that run
    strictly monotonically in insertion depth; an inserted array cannot
    double back, and in a tightly wound cochlea the distance between
    adjacent turns can drop below the contact spacing, where the
    unconstrained cost happily zigzags across turns. Candidates whose depth
    cannot be measured are excluded, and the returned chain is oriented so
    the lower-DOI endpoint comes first.
    """
    cands = list(cands)
    K = len(cands)
    n = int(n_contacts)
    if K < n:
        raise ValueError("insufficient candidates")
    if n < 2:
        raise ValueError("need at least 2 contacts")
    pos = np.stack([as_point3(c.position) for c in cands])
    score = np.array([float(c.score) for c in cands])
    if (score < 0).any():
        raise ValueError("candidate scores must be nonnegative")

    doi = None
    if anatomy is not None:
        from .phantom import point_doi

        doi = np.full(K, np.nan)
        for i in range(K):
            try:
                doi[i] = point_doi(pos[i], anatomy)
            except ValueError:
                pass

    node = -weights.intensity * score
    diff = pos[:, None, :] - pos[None, :, :]
    pair = weights.spacing * (np.sqrt((diff**2).sum(axis=2)) - nominal_spacing) ** 2
    np.fill_diagonal(pair, np.inf)

    # bound[s][c]: relaxed minimum cost of appending s more candidates after c
    bound = np.zeros((n, K))
    for s in range(1, n):
        bound[s] = (pair + node[None, :] + bound[s - 1][None, :]).min(axis=1)

    best_cost = np.inf
    best_chain = None
    used = np.zeros(K, dtype=bool)
    chain = []

    def dfs(last: int, cost: float, slots_left: int, direction: float):
        nonlocal best_cost, best_chain
        if slots_left == 0:
            if cost < best_cost:
                best_cost = cost
                best_chain = chain.copy()
            return
        if cost + bound[slots_left][last] >= best_cost:
            return
        for c in range(K):
            if used[c]:
                continue
            step_dir = direction
            if doi is not None:
                if np.isnan(doi[c]):
                    continue
                step = doi[c] - doi[last]
                if step == 0.0 or (direction != 0.0 and step * direction < 0.0):
                    continue
                step_dir = 1.0 if step > 0.0 else -1.0
            cost_c = cost + pair[last, c] + node[c]
            if cost_c + bound[slots_left - 1][c] >= best_cost:
                continue
            used[c] = True
            chain.append(c)
            dfs(c, cost_c, slots_left - 1, step_dir)
            chain.pop()
            used[c] = False

    for c in range(K):
        if doi is not None and np.isnan(doi[c]):
            continue
        start = node[c]
        if start + bound[n - 1][c] >= best_cost:
            continue
        used[c] = True
        chain.append(c)
        dfs(c, start, n - 1, 0.0)
        chain.pop()
        used[c] = False

    if best_chain is None:
        raise ValueError("no candidate chain is monotone in insertion depth")
    contacts = pos[best_chain]
    if doi is not None and doi[best_chain[0]] > doi[best_chain[-1]]:
        contacts = contacts[::-1]
    return ElectrodeLocalization(contacts, array_model=array_model, provenance="AL")


# ---------------------------------------------------------------------------
# error analyses


def localization_errors(a: ElectrodeLocalization, b: ElectrodeLocalization) -> ErrorSummary:
    """Per-contact Euclidean distances between corresponding contacts."""
    if a.n_contacts != b.n_contacts:
        raise ValueError("contact count mismatch")
    return ErrorSummary.from_errors(np.linalg.norm(a.contacts - b.contacts, axis=1))


class ConvergenceResult(NamedTuple):
    converged_at: int
    running_mean: ElectrodeLocalization


def repeated_localization_convergence(seq, tol: float = 0.05) -> ConvergenceResult:
    """Average repeated localizations until adding one moves every contact <= tol.

    Returns the smallest k >= 2 such that incorporating item k displaces no
    contact of the running average by more than ``tol`` mm, plus that average.
    """
    seq = list(seq)
    if len(seq) < 2:
        raise ValueError("need at least 2 localizations")
    counts = {item.n_contacts for item in seq}
    if len(counts) != 1:
        raise ValueError("contact count mismatch")
    running = seq[0].contacts.copy()
    disp = np.inf
    for k in range(2, len(seq) + 1):
        updated = running + (seq[k - 1].contacts - running) / k
        disp = float(np.linalg.norm(updated - running, axis=1).max())
        running = updated
        if disp <= tol:
            return ConvergenceResult(
                converged_at=k,
                running_mean=ElectrodeLocalization(
                    running, array_model=seq[0].array_model, provenance="IL"
                ),
            )
    raise ValueError(f"not converged: last displacement {disp:.4f} mm")


class MigrationResult(NamedTuple):
    migrated: bool
    max_residual: float


def detect_migration(
    a: ElectrodeLocalization, b: ElectrodeLocalization, threshold: float = 0.5
) -> MigrationResult:
    """Rigidly align a onto b; migration = any contact residual above threshold."""
    if a.n_contacts != b.n_contacts:
        raise ValueError("contact count mismatch")
    tf, _ = similarity_align(a.contacts, b.contacts, with_scale=False)
    residuals = np.linalg.norm(tf.apply(a.contacts) - b.contacts, axis=1)
    max_residual = float(residuals.max())
    return MigrationResult(migrated=bool(max_residual > threshold), max_residual=max_residual)


def simulate_image_localization(gl: ElectrodeLocalization, seed, sigma: float = IL_SIGMA) -> ElectrodeLocalization:
    """One expert image-based localization: GL plus isotropic Gaussian error."""
    rng = np.random.default_rng(seed)
    noisy = gl.contacts + rng.normal(0.0, sigma, size=gl.contacts.shape)
    return ElectrodeLocalization(noisy, array_model=gl.array_model, provenance="IL")


# ---------------------------------------------------------------------------
# CSV I/O


LOC_HEADER = "contact_index,x_mm,y_mm,z_mm"


def save_localization_csv(loc: ElectrodeLocalization, path) -> None:
    rows = [LOC_HEADER]
    for i, p in enumerate(loc.contacts):
        rows.append(f"{i},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}")
    Path(path).write_text("\n".join(rows) + "\n")


def load_localization_csv(path, array_model: str = "unknown", provenance: str = "other") -> ElectrodeLocalization:
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != LOC_HEADER:
        raise ValueError("bad localization header")
    rows = sorted((line.split(",") for line in lines[1:]), key=lambda r: int(r[0]))
    contacts = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in rows])
    return ElectrodeLocalization(contacts, array_model=array_model, provenance=provenance)
