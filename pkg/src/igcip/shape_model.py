"""Statistical shape model of the cochlea phantom family.

Builds a PCA model from topology-identical anatomies (generalized Procrustes
alignment followed by an eigendecomposition of the residuals), fits it to
weighted point targets with per-mode clamping, and perturbs a reference
anatomy to a prescribed mean point-to-point error. The error magnitudes of the
segmentation methods under study are modeled by gamma distributions matched to
their reported moments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import gammaincinv

from .geometry import RigidTransform, read_off, similarity_align, write_off
from .geometry.core import TriMesh
from .phantom import STRUCTURES, CochleaAnatomy, MeshLayout, anatomy_from_vertices

COEFF_CLAMP_SIGMA = 3.0
MODEL_FILE_VERSION = 1


@dataclass(frozen=True)
class ShapeModel:
    """Linear shape model: ``shape = mean + modes @ c`` in model space.

    ``mean`` is a flat vector of length 3V (vertex-major, xyz interleaved),
    ``modes`` is 3V x m with orthonormal columns, ``eigenvalues`` holds the
    per-mode variances in descending order. Structure ranges, topology, layout
    and chirality carry everything needed to reassemble a full anatomy.
    """

    mean: np.ndarray
    modes: np.ndarray
    eigenvalues: np.ndarray
    structure_ranges: dict
    topology: dict
    layout: MeshLayout
    chirality: str

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        modes = np.asarray(self.modes, dtype=float)
        ev = np.asarray(self.eigenvalues, dtype=float)
        if modes.shape != (len(mean), len(ev)):
            raise ValueError("modes must be 3V x m")
        if len(ev) and (np.diff(ev) > 1e-12).any():
            raise ValueError("eigenvalues must be descending")
        if (ev < -1e-12).any():
            raise ValueError("eigenvalues must be nonnegative")
        if len(ev):
            gram = modes.T @ modes
            if not np.allclose(gram, np.eye(len(ev)), atol=1e-9):
                raise ValueError("mode columns must be orthonormal")
        for name, arr in (("mean", mean), ("modes", modes), ("eigenvalues", np.maximum(ev, 0.0))):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return len(self.mean) // 3

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    def clamp_bounds(self) -> np.ndarray:
        return COEFF_CLAMP_SIGMA * np.sqrt(self.eigenvalues)

    def mean_points(self) -> np.ndarray:
        return self.mean.reshape(-1, 3)


class FitResult(NamedTuple):
    c: np.ndarray
    pose: RigidTransform
    scale: float
    residual: float


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValueError("gamma shape must be finite positive")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("gamma scale must be finite positive")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def std(self) -> float:
        return self.scale * self.shape**0.5


def gamma_from_moments(mean: float, std: float) -> GammaParams:
    """Method-of-moments gamma fit: ``k = (mean/std)^2``, ``theta = std^2/mean``."""
    if mean <= 0 or std <= 0:
        raise ValueError("mean and std must be positive")
    return GammaParams(shape=(mean / std) ** 2, scale=std * std / mean)


def sample_gamma(params: GammaParams, seed, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return rng.gamma(shape=params.shape, scale=params.scale, size=n)


def gamma_quantile(params: GammaParams, u):
    """Inverse CDF at probability level(s) ``u`` in [0, 1)."""
    u = np.asarray(u, dtype=float)
    if ((u < 0.0) | (u >= 1.0)).any():
        raise ValueError("quantile levels must be in [0, 1)")
    out = params.scale * gammaincinv(params.shape, u)
    return float(out) if out.ndim == 0 else out


def _apply_similarity(transform: RigidTransform, scale: float, points: np.ndarray) -> np.ndarray:
    return scale * (points @ transform.rotation.T) + transform.translation


def _check_same_topology(training):
    first = training[0]
    for other in training[1:]:
        if other.layout.counts() != first.layout.counts():
            raise ValueError("training shapes must share topology")
        for name in STRUCTURES:
            if not np.array_equal(getattr(other, name).triangles, getattr(first, name).triangles):
                raise ValueError("training shapes must share topology")
        if other.frame.chirality != first.frame.chirality:
            raise ValueError("training shapes must share chirality")


def build_shape_model(training, variance_frac: float = 0.999, n_modes: int | None = None) -> ShapeModel:
    """Build a PCA shape model from topology-identical training anatomies.

    Shapes are brought into a common pose by generalized Procrustes alignment
    with similarity transforms (the mean keeps millimeter scale), then the
    aligned residuals are decomposed by SVD. Enough modes are retained to
    explain ``variance_frac`` of the variance, capped at n-1; ``n_modes``
    overrides the retention rule.
    """
    training = list(training)
    if len(training) < 3:
        raise ValueError("need at least 3 training shapes")
    _check_same_topology(training)
    shapes = [a.all_vertices() for a in training]
    n = len(shapes)

    mean = shapes[0].copy()
    aligned = shapes
    for _ in range(100):
        aligned = []
        for s in shapes:
            tf, sc = similarity_align(s, mean)
            aligned.append(_apply_similarity(tf, sc, s))
        new_mean = np.mean(aligned, axis=0)
        if np.abs(new_mean - mean).max() < 1e-9:
            mean = new_mean
            break
        mean = new_mean

    data = np.stack([(a - mean).ravel() for a in aligned])
    _, svals, vt = np.linalg.svd(data, full_matrices=False)
    eigenvalues = svals**2 / (n - 1)
    total = float(eigenvalues.sum())
    max_modes = n - 1
    if n_modes is not None:
        m = min(n_modes, max_modes, len(eigenvalues))
    elif total < 1e-20:
        m = 0
    else:
        frac = np.cumsum(eigenvalues) / total
        m = min(int(np.searchsorted(frac, variance_frac) + 1), max_modes)

    first = training[0]
    counts = first.layout.counts()
    ranges = {}
    start = 0
    for name in STRUCTURES:
        ranges[name] = (start, start + counts[name])
        start += counts[name]
    return ShapeModel(
        mean=mean.ravel(),
        modes=vt[:m].T,
        eigenvalues=eigenvalues[:m],
        structure_ranges=ranges,
        topology={name: getattr(first, name).triangles for name in STRUCTURES},
        layout=first.layout,
        chirality=first.frame.chirality,
    )


def sample_shape(model: ShapeModel, c, pose: RigidTransform | None = None) -> CochleaAnatomy:
    """Instantiate the anatomy ``pose o (mean + modes @ c)``."""
    c = np.asarray(c, dtype=float).ravel()
    if len(c) != model.n_modes:
        raise ValueError(f"expected {model.n_modes} coefficients, got {len(c)}")
    flat = model.mean + model.modes @ c if len(c) else model.mean.copy()
    points = flat.reshape(-1, 3)
    if pose is not None:
        points = pose.apply(points)
    return anatomy_from_vertices(
        points, model.layout, model.topology, model.chirality, provenance="synthesized"
    )


def fit_to_points(model: ShapeModel, indices, points, weights=None) -> FitResult:
    """Fit pose, scale and clamped coefficients to weighted vertex targets.

    Alternates (a) weighted similarity alignment of the current model shape to
    the targets and (b) weighted least-squares projection onto the modes with
    each coefficient clamped to +-3 sqrt(eigenvalue), until the coefficients
    change by less than 1e-8. The residual is the weighted RMS distance in
    world space.
    """
    indices = np.asarray(indices, dtype=int).ravel()
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(indices) != len(points):
        raise ValueError("indices and points must pair up")
    if (indices < 0).any() or (indices >= model.n_vertices).any():
        raise ValueError("vertex index out of range")
    if weights is None:
        weights = np.ones(len(indices))
    weights = np.asarray(weights, dtype=float).ravel()
    if len(weights) != len(indices):
        raise ValueError("one weight per target required")
    if (weights < 0).any() or (weights > 1).any():
        raise ValueError("weights must lie in [0, 1]")

    keep = weights > 0
    if keep.sum() < 4:
        raise ValueError("underdetermined fit")
    centered = points[keep] - points[keep].mean(axis=0)
    if np.linalg.svd(centered, compute_uv=False)[1] < 1e-9:
        raise ValueError("underdetermined fit")

    mean_pts = model.mean_points()[indices]
    m = model.n_modes
    modes_sub = model.modes.reshape(-1, 3, m)[indices] if m else np.zeros((len(indices), 3, 0))
    sqrt_w = np.sqrt(weights)
    design = (modes_sub * sqrt_w[:, None, None]).reshape(-1, m)
    solver = np.linalg.pinv(design) if m else None
    bounds = model.clamp_bounds()

    c = np.zeros(m)
    tf, sc = similarity_align(mean_pts, points, weights=weights)
    for _ in range(200):
        shape_pts = mean_pts + modes_sub @ c if m else mean_pts
        tf, sc = similarity_align(shape_pts, points, weights=weights)
        if m == 0:
            break
        back = ((points - tf.translation) @ tf.rotation) / sc
        rhs = ((back - mean_pts) * sqrt_w[:, None]).reshape(-1)
        c_new = np.clip(solver @ rhs, -bounds, bounds)
        if np.abs(c_new - c).max() < 1e-8:
            c = c_new
            break
        c = c_new

    shape_pts = mean_pts + modes_sub @ c if m else mean_pts
    world = _apply_similarity(tf, sc, shape_pts)
    wsum = weights.sum()
    residual = float(np.sqrt((weights * ((world - points) ** 2).sum(axis=1)).sum() / wsum))
    return FitResult(c=c, pose=tf, scale=sc, residual=residual)


def perturb_to_target_error(
    model: ShapeModel,
    reference: CochleaAnatomy,
    target_mean_error: float,
    seed,
    max_redraws: int = 100,
    structures=None,
) -> CochleaAnatomy:
    """Deform ``reference`` so its mean point-to-point error equals the target.

    A direction is drawn isotropically in whitened coefficient space and
    scaled closed-form: the displacement field is linear in the scale, so
    ``alpha = target / mean_error(direction)`` hits the target exactly. Draws
    whose scaled coefficients would violate the +-3 sigma clamps are rejected
    and redrawn. ``structures`` optionally restricts the error average to a
    subset of structure names (the displacement itself stays global).
    """
    if target_mean_error < 0:
        raise ValueError("target_mean_error must be nonnegative")
    ref_pts = reference.all_vertices()
    if len(ref_pts) != model.n_vertices:
        raise ValueError("reference is not compatible with the model")
    if target_mean_error == 0:
        return reference.with_vertices(ref_pts, provenance="synthesized")
    if model.n_modes == 0 or model.eigenvalues.max() <= 0:
        raise ValueError("target error exceeds model capacity")

    if structures is None:
        sel = slice(None)
    else:
        mask = np.zeros(model.n_vertices, dtype=bool)
        for name in structures:
            start, stop = model.structure_ranges[name]
            mask[start:stop] = True
        sel = mask

    tf, sc = similarity_align(model.mean_points(), ref_pts)
    sqrt_ev = np.sqrt(model.eigenvalues)
    bounds = model.clamp_bounds()
    rng = np.random.default_rng(seed)
    for _ in range(max_redraws):
        g = rng.standard_normal(model.n_modes)
        norm = np.linalg.norm(g)
        if norm < 1e-12:
            continue
        u = (g / norm) * sqrt_ev
        disp = (model.modes @ u).reshape(-1, 3)
        mean_err = sc * float(np.linalg.norm(disp[sel], axis=1).mean())
        if mean_err < 1e-15:
            continue
        alpha = target_mean_error / mean_err
        if (np.abs(alpha * u) <= bounds + 1e-12).all():
            world_disp = alpha * sc * (disp @ tf.rotation.T)
            return reference.with_vertices(ref_pts + world_disp, provenance="synthesized")
    raise ValueError("target error exceeds model capacity")


# ---------------------------------------------------------------------------
# serialization


def save_shape_model(model: ShapeModel, path) -> None:
    """Write the model as JSON plus one OFF file per structure (mean geometry)."""
    path = Path(path)
    mean_pts = model.mean_points()
    topo_files = {}
    for name in STRUCTURES:
        start, stop = model.structure_ranges[name]
        mesh = TriMesh(mean_pts[start:stop], model.topology[name], oriented=(name == "bm"))
        off_name = f"{path.stem}_{name}.off"
        write_off(mesh, path.parent / off_name)
        topo_files[name] = off_name
    doc = {
        "version": MODEL_FILE_VERSION,
        "mean": model.mean.tolist(),
        "eigenvalues": model.eigenvalues.tolist(),
        "modes": model.modes.tolist(),
        "structure_ranges": {k: list(v) for k, v in model.structure_ranges.items()},
        "layout": model.layout.as_dict(),
        "chirality": model.chirality,
        "topology_files": topo_files,
    }
    path.write_text(json.dumps(doc))


def load_shape_model(path) -> ShapeModel:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("version") != MODEL_FILE_VERSION:
        raise ValueError("unsupported model file version")
    topology = {}
    for name, off_name in doc["topology_files"].items():
        topology[name] = read_off(path.parent / off_name).triangles
    mean = np.asarray(doc["mean"], dtype=float)
    n_modes = len(doc["eigenvalues"])
    modes = np.asarray(doc["modes"], dtype=float).reshape(len(mean), n_modes)
    return ShapeModel(
        mean=mean,
        modes=modes,
        eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
        structure_ranges={k: tuple(v) for k, v in doc["structure_ranges"].items()},
        topology=topology,
        layout=MeshLayout.from_dict(doc["layout"]),
        chirality=doc["chirality"],
    )
