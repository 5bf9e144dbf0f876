"""Surface correspondence and segmentation error measurement.

Rigid ICP against a triangle mesh, shape-model-constrained draping that puts
an arbitrary target anatomy into the model's vertex ordering, and per-structure
segmentation error summaries with the hook-region exclusion applied to SV.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import (
    RigidTransform,
    closest_points_on_mesh,
    corresponding_point_errors,
    similarity_align,
)
from .localization import ErrorSummary
from .phantom import STRUCTURES, CochleaAnatomy, anatomy_from_vertices
from .shape_model import ShapeModel, fit_to_points


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_tol: float = 1e-6
    trim_fraction: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ValueError("trim_fraction must be in [0, 0.5)")


class IcpResult(NamedTuple):
    transform: RigidTransform
    rms: float


def rigid_icp(source, target_mesh, init: RigidTransform | None = None, params: IcpParams = IcpParams()) -> IcpResult:
    """Iterative closest point with closed-form rigid updates.

    Alternates closest-point correspondence on the target mesh with an exact
    weighted rigid refit of the original source points, so the reported RMS is
    non-increasing across iterations (with trimming disabled). Stops when the
    RMS change drops below the tolerance.
    """
    source = np.asarray(source, dtype=float).reshape(-1, 3)
    if len(source) < 3:
        raise ValueError("degenerate source")
    centered = source - source.mean(axis=0)
    if np.linalg.svd(centered, compute_uv=False)[1] < 1e-12:
        raise ValueError("degenerate source")

    transform = init if init is not None else RigidTransform.identity()
    prev_rms = np.inf
    rms = np.inf
    for _ in range(params.max_iterations):
        moved = transform.apply(source)
        dist, closest, _ = closest_points_on_mesh(target_mesh, moved)
        if params.trim_fraction > 0:
            keep_n = max(3, int(np.ceil(len(source) * (1.0 - params.trim_fraction))))
            keep = np.argsort(dist, kind="stable")[:keep_n]
        else:
            keep = slice(None)
        rms = float(np.sqrt(np.mean(dist[keep] ** 2)))
        candidate, _ = similarity_align(source[keep], closest[keep], with_scale=False)
        if abs(prev_rms - rms) < params.convergence_tol:
            break
        transform = candidate
        prev_rms = rms
    return IcpResult(transform=transform, rms=rms)


def asm_icp_correspondence(model: ShapeModel, target: CochleaAnatomy, max_iterations: int = 50, motion_tol: float = 1e-4) -> CochleaAnatomy:
    """Drape the model topology onto a target anatomy.

    Per iteration, every model vertex finds its closest point on the matching
    target structure surface and the model is refit to those targets with unit
    weights; stops when the mean vertex motion falls below ``motion_tol`` mm.
    Emits a warning and returns the last iterate when not converged.
    """
    ranges = model.structure_ranges
    target_meshes = {name: getattr(target, name) for name in STRUCTURES}

    # pose initialization: centroid and RMS-radius matching
    mean_pts = model.mean_points()
    tgt_all = target.all_vertices()
    scale0 = np.sqrt(
        ((tgt_all - tgt_all.mean(axis=0)) ** 2).sum()
        / max(((mean_pts - mean_pts.mean(axis=0)) ** 2).sum(), 1e-30)
    )
    current = scale0 * (mean_pts - mean_pts.mean(axis=0)) + tgt_all.mean(axis=0)

    indices = np.arange(model.n_vertices)
    converged = False
    for _ in range(max_iterations):
        targets = np.empty_like(current)
        for name in STRUCTURES:
            start, stop = ranges[name]
            _, closest, _ = closest_points_on_mesh(target_meshes[name], current[start:stop])
            targets[start:stop] = closest
        fit = fit_to_points(model, indices, targets)
        shape_pts = (model.mean + (model.modes @ fit.c if model.n_modes else 0.0)).reshape(-1, 3)
        updated = fit.scale * (shape_pts @ fit.pose.rotation.T) + fit.pose.translation
        motion = float(np.linalg.norm(updated - current, axis=1).mean())
        current = updated
        if motion < motion_tol:
            converged = True
            break
    if not converged:
        warnings.warn("correspondence did not converge; returning last iterate")
    return anatomy_from_vertices(
        current, model.layout, model.topology, target.frame.chirality, provenance=target.provenance
    )


def segmentation_errors(auto: CochleaAnatomy, truth: CochleaAnatomy, hook_exclusion_radius: float = 1.5):
    """Per-structure and pooled segmentation error summaries.

    Vertex-wise Euclidean distances between corresponding vertices. SV
    vertices within ``hook_exclusion_radius`` mm of the truth hook landmark
    are excluded (the hook region has no true anatomical boundary); the pooled
    summary honors the same exclusion.
    """
    if auto.layout.counts() != truth.layout.counts():
        raise ValueError("no correspondence")
    summaries = {}
    pooled = []
    for name in STRUCTURES:
        a = getattr(auto, name).vertices
        t = getattr(truth, name).vertices
        if name == "sv":
            dist_to_hook = np.linalg.norm(t - truth.hook_landmark, axis=1)
            mask = dist_to_hook > hook_exclusion_radius
            errors = corresponding_point_errors(a, t, mask=mask)
        else:
            errors = corresponding_point_errors(a, t)
        summaries[name] = ErrorSummary.from_errors(errors)
        pooled.append(errors)
    summaries["pooled"] = ErrorSummary.from_errors(np.concatenate(pooled))
    return summaries
