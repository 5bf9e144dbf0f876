"""Rigid ICP, model-constrained draping, and segmentation error summaries."""

import numpy as np
import pytest
import scipy.spatial.transform

from igcip.correspondence import (
    IcpParams,
    asm_icp_correspondence,
    rigid_icp,
    segmentation_errors,
)
from igcip.geometry import RigidTransform
from igcip.geometry.core import TriMesh
from igcip.harness import generate_phantom_population
from igcip.phantom import STRUCTURES, PhantomSpec
from igcip.shape_model import build_shape_model, sample_shape


@pytest.fixture(scope="module")
def coarse_family():
    # low-resolution family keeps the closest-point iterations cheap
    spec = PhantomSpec(
        rings_per_turn=16, st_ring_points=7, sv_ring_points=7, ar_ring_points=5,
        variation=1.2,
    )
    return [p.anatomy for p in generate_phantom_population(spec, 5, 99)]


@pytest.fixture(scope="module")
def coarse_model(coarse_family):
    return build_shape_model(coarse_family, n_modes=4)


def planted_target(mesh):
    rot = scipy.spatial.transform.Rotation.from_rotvec([0.0025, -0.004, 0.003]).as_matrix()
    transform = RigidTransform(rot, np.array([0.012, -0.008, 0.016]))
    return transform, TriMesh(transform.apply(mesh.vertices), mesh.triangles)


# ---------------------------------------------------------------------------
# rigid ICP


def test_icp_params_validation():
    with pytest.raises(ValueError):
        IcpParams(max_iterations=0)
    with pytest.raises(ValueError):
        IcpParams(convergence_tol=0.0)
    with pytest.raises(ValueError):
        IcpParams(trim_fraction=0.5)


def test_icp_recovers_planted_transform(coarse_family):
    mesh = coarse_family[0].st
    transform, target = planted_target(mesh)
    res = rigid_icp(
        mesh.vertices[::2], target,
        params=IcpParams(max_iterations=500, convergence_tol=1e-10),
    )
    assert res.rms < 1e-6
    assert np.abs(res.transform.rotation - transform.rotation).max() < 1e-6
    assert np.abs(res.transform.translation - transform.translation).max() < 1e-6


def test_icp_starts_from_given_transform(coarse_family):
    mesh = coarse_family[0].st
    transform, target = planted_target(mesh)
    res = rigid_icp(mesh.vertices[::2], target, init=transform,
                    params=IcpParams(max_iterations=5))
    assert res.rms < 1e-9


def test_icp_trimming_resists_outliers(coarse_family):
    mesh = coarse_family[0].st
    transform, target = planted_target(mesh)
    rng = np.random.default_rng(0)
    src = mesh.vertices[::2].copy()
    bad = rng.choice(len(src), size=len(src) // 10, replace=False)
    src[bad] += rng.normal(0.0, 4.0, size=(len(bad), 3))

    params = IcpParams(max_iterations=120, convergence_tol=1e-8, trim_fraction=0.15)
    trimmed = rigid_icp(src, target, params=params)
    plain = rigid_icp(src, target, params=IcpParams(max_iterations=120, convergence_tol=1e-8))
    trimmed_err = np.abs(trimmed.transform.rotation - transform.rotation).max()
    plain_err = np.abs(plain.transform.rotation - transform.rotation).max()
    assert trimmed_err < 5e-3
    assert trimmed_err < plain_err


def test_icp_rejects_degenerate_source(coarse_family):
    mesh = coarse_family[0].st
    with pytest.raises(ValueError, match="degenerate"):
        rigid_icp(mesh.vertices[:2], mesh)
    line = np.outer(np.linspace(0.0, 1.0, 8), [1.0, 2.0, 0.5])
    with pytest.raises(ValueError, match="degenerate"):
        rigid_icp(line, mesh)


# ---------------------------------------------------------------------------
# model-constrained draping


def test_drape_recovers_model_shape(coarse_model):
    target = sample_shape(coarse_model, 0.5 * np.sqrt(coarse_model.eigenvalues))
    draped = asm_icp_correspondence(coarse_model, target)
    err = np.linalg.norm(draped.all_vertices() - target.all_vertices(), axis=1)
    assert err.mean() < 5e-3
    assert draped.provenance == target.provenance
    assert draped.layout == coarse_model.layout
    assert draped.frame.chirality == target.frame.chirality


def test_drape_warns_when_not_converged(coarse_model):
    target = sample_shape(coarse_model, 0.5 * np.sqrt(coarse_model.eigenvalues))
    with pytest.warns(UserWarning, match="converge"):
        asm_icp_correspondence(coarse_model, target, max_iterations=1)


# ---------------------------------------------------------------------------
# segmentation error summaries


def test_segmentation_errors_uniform_shift(anatomy):
    shifted = anatomy.with_vertices(anatomy.all_vertices() + np.array([0.2, 0.0, 0.0]))
    summaries = segmentation_errors(shifted, anatomy)
    for name in STRUCTURES:
        assert summaries[name].mean == pytest.approx(0.2, abs=1e-12)
        assert summaries[name].std == pytest.approx(0.0, abs=1e-12)
    assert summaries["pooled"].mean == pytest.approx(0.2, abs=1e-12)


def test_segmentation_errors_hook_exclusion(anatomy):
    shifted = anatomy.with_vertices(anatomy.all_vertices() + np.array([0.2, 0.0, 0.0]))
    summaries = segmentation_errors(shifted, anatomy, hook_exclusion_radius=1.5)
    hook_dist = np.linalg.norm(anatomy.sv.vertices - anatomy.hook_landmark, axis=1)
    expected_kept = int((hook_dist > 1.5).sum())
    assert expected_kept < anatomy.sv.n_vertices  # the exclusion bites
    assert len(summaries["sv"].per_item) == expected_kept
    full = sum(getattr(anatomy, n).n_vertices for n in STRUCTURES)
    assert len(summaries["pooled"].per_item) == full - (anatomy.sv.n_vertices - expected_kept)

    # an exclusion radius beyond the cochlea empties the SV summary
    everything = segmentation_errors(shifted, anatomy, hook_exclusion_radius=1e9)
    assert len(everything["sv"].per_item) == 0
    assert everything["sv"].mean == 0.0


def test_segmentation_errors_need_correspondence(anatomy, coarse_family):
    with pytest.raises(ValueError, match="no correspondence"):
        segmentation_errors(coarse_family[0], anatomy)
