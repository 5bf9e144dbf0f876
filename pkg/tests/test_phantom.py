"""Phantom generation, cochlear frame fitting, and depth/distance metrics."""

import dataclasses

import numpy as np
import pytest
from numpy.random import SeedSequence

from igcip.phantom import (
    STRUCTURES,
    CochlearFrame,
    FrequencyMapParams,
    MeshLayout,
    PhantomSpec,
    doi_sequence,
    dtobm,
    dtobm_sequence,
    dtom,
    dtom_sequence,
    generate_phantom,
    load_phantom,
    place_frequency,
    point_doi,
    save_phantom,
)


# ---------------------------------------------------------------------------
# spec and layout plumbing


def test_phantom_spec_roundtrip(spec):
    assert PhantomSpec.from_dict(spec.as_dict()) == spec


@pytest.mark.parametrize(
    "kwargs",
    [
        {"contact_count": 1},
        {"insertion_depth_deg": 901.0},
        {"turns_deg": 0.0},
        {"variation": -0.1},
        {"chirality": "up"},
        {"base_radius": -1.0},
    ],
)
def test_phantom_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PhantomSpec(**kwargs)


def test_mesh_layout_counts():
    layout = MeshLayout(
        rings=5, st_points=3, sv_points=4, bm_points=2, ar_points=6,
        ring_angles_deg=(0.0, 1.0, 2.0, 3.0, 4.0),
    )
    assert layout.counts() == {"st": 15, "sv": 20, "ar": 30, "bm": 10}
    assert MeshLayout.from_dict(layout.as_dict()) == layout


def test_mesh_layout_validation():
    with pytest.raises(ValueError):
        MeshLayout(rings=3, st_points=3, sv_points=3, bm_points=2, ar_points=3,
                   ring_angles_deg=(0.0, 1.0, 2.0))
    with pytest.raises(ValueError):
        MeshLayout(rings=4, st_points=3, sv_points=3, bm_points=2, ar_points=3,
                   ring_angles_deg=(0.0, 1.0, 2.0))


# ---------------------------------------------------------------------------
# cochlear frame


def test_frame_basis_is_orthonormal(anatomy):
    x, y = anatomy.frame.in_plane_basis()
    assert abs(np.linalg.norm(x) - 1.0) < 1e-12
    assert abs(np.linalg.norm(y) - 1.0) < 1e-12
    assert abs(x @ y) < 1e-12
    assert abs(x @ anatomy.frame.axis) < 1e-9


def test_frame_validation():
    with pytest.raises(ValueError, match="unit"):
        CochlearFrame(np.zeros(3), np.array([0.0, 0.0, 2.0]),
                      np.array([1.0, 0.0, 0.0]), "right")
    with pytest.raises(ValueError, match="perpendicular"):
        CochlearFrame(np.zeros(3), np.array([0.0, 0.0, 1.0]),
                      np.array([0.0, 0.6, 0.8]), "right")
    with pytest.raises(ValueError, match="chirality"):
        CochlearFrame(np.zeros(3), np.array([0.0, 0.0, 1.0]),
                      np.array([1.0, 0.0, 0.0]), "port")


def test_frame_dict_roundtrip(anatomy):
    frame = anatomy.frame
    again = CochlearFrame.from_dict(frame.as_dict())
    assert np.array_equal(frame.origin, again.origin)
    assert np.array_equal(frame.axis, again.axis)
    assert np.array_equal(frame.zero_ref, again.zero_ref)
    assert frame.chirality == again.chirality


# ---------------------------------------------------------------------------
# generation


def test_generate_phantom_is_deterministic(spec):
    a = generate_phantom(spec, SeedSequence(123))
    b = generate_phantom(spec, SeedSequence(123))
    assert np.array_equal(a.anatomy.all_vertices(), b.anatomy.all_vertices())
    assert np.array_equal(a.gl.contacts, b.gl.contacts)


def test_generate_phantom_seed_controls_variation(spec, phantom):
    other = generate_phantom(spec, SeedSequence(8))
    assert not np.array_equal(phantom.anatomy.all_vertices(), other.anatomy.all_vertices())

    frozen = dataclasses.replace(spec, variation=0.0)
    a = generate_phantom(frozen, SeedSequence(1))
    b = generate_phantom(frozen, SeedSequence(2))
    assert np.array_equal(a.anatomy.all_vertices(), b.anatomy.all_vertices())


def test_phantom_mesh_counts_match_layout(spec, anatomy):
    rings = int(round(spec.turns_deg / 360.0 * spec.rings_per_turn)) + 1
    assert anatomy.layout.rings == rings
    counts = anatomy.layout.counts()
    for name in STRUCTURES:
        assert getattr(anatomy, name).n_vertices == counts[name]
    assert anatomy.layout.ring_angles_deg[0] == 0.0
    assert anatomy.layout.ring_angles_deg[-1] == spec.turns_deg


def test_structure_ranges_partition_vertices(anatomy):
    allv = anatomy.all_vertices()
    for name, (start, stop) in anatomy.structure_ranges().items():
        assert np.array_equal(allv[start:stop], getattr(anatomy, name).vertices)


def test_ground_truth_chain_geometry(spec, phantom):
    gl, anatomy = phantom.gl, phantom.anatomy
    assert gl.n_contacts == spec.contact_count
    gaps = np.linalg.norm(np.diff(gl.contacts, axis=0), axis=1)
    # chord gaps sit just under the nominal arc-length spacing
    assert (gaps <= spec.nominal_contact_spacing + 1e-9).all()
    assert (gaps > 0.8 * spec.nominal_contact_spacing).all()

    doi = doi_sequence(gl, anatomy)
    assert (np.diff(doi) > 0).all()
    assert doi[0] > 0.0
    # the deepest contact was placed at the requested insertion depth; the
    # fitted frame measures it back within a few degrees
    assert abs(doi[-1] - spec.insertion_depth_deg) < 20.0


def test_left_ear_phantom_unwinds_too(spec):
    left = dataclasses.replace(spec, chirality="left")
    ph = generate_phantom(left, SeedSequence(5))
    assert ph.anatomy.frame.chirality == "left"
    doi = doi_sequence(ph.gl, ph.anatomy)
    assert (np.diff(doi) > 0).all()
    assert 0.0 < doi[-1] <= 900.0


def test_array_that_cannot_fit_is_rejected(spec):
    cramped = dataclasses.replace(spec, nominal_contact_spacing=30.0)
    with pytest.raises(ValueError, match="does not fit"):
        generate_phantom(cramped, SeedSequence(0))


# ---------------------------------------------------------------------------
# anatomy container invariants


def test_anatomy_rejects_bad_provenance(anatomy):
    with pytest.raises(ValueError, match="provenance"):
        dataclasses.replace(anatomy, provenance="guesswork")


def test_anatomy_rejects_broken_centerline(anatomy):
    deg = anatomy.centerline_deg.copy()
    deg[0] = 1.0
    with pytest.raises(ValueError, match="start at 0"):
        dataclasses.replace(anatomy, centerline_deg=deg)
    deg = anatomy.centerline_deg.copy()
    deg[3] = deg[2]
    with pytest.raises(ValueError, match="increasing"):
        dataclasses.replace(anatomy, centerline_deg=deg)


def test_with_vertices_rederives_frame(anatomy):
    rebuilt = anatomy.with_vertices(anatomy.all_vertices(), provenance="m_a2")
    assert rebuilt.provenance == "m_a2"
    assert rebuilt.layout == anatomy.layout
    assert np.allclose(rebuilt.frame.origin, anatomy.frame.origin, atol=1e-8)
    assert np.allclose(rebuilt.centerline_deg, anatomy.centerline_deg, atol=1e-8)

    shifted = anatomy.with_vertices(anatomy.all_vertices() + np.array([5.0, -2.0, 1.0]))
    assert np.allclose(shifted.frame.origin - anatomy.frame.origin,
                       [5.0, -2.0, 1.0], atol=1e-6)

    with pytest.raises(ValueError, match="expected"):
        anatomy.with_vertices(anatomy.all_vertices()[:-1])


# ---------------------------------------------------------------------------
# depth and distance metrics


def test_centerline_points_measure_their_own_angle(anatomy):
    assert abs(point_doi(anatomy.centerline_points[0], anatomy)) < 1e-6
    for k in (10, 40, 80, len(anatomy.centerline_deg) - 1):
        measured = point_doi(anatomy.centerline_points[k], anatomy)
        assert abs(measured - anatomy.centerline_deg[k]) < 1e-6


def test_point_far_from_cochlea_is_rejected(anatomy):
    lost = anatomy.frame.origin + 100.0 * anatomy.frame.axis
    with pytest.raises(ValueError, match="outside cochlear region"):
        point_doi(lost, anatomy)


def test_distance_sequences_match_scalar_forms(phantom):
    gl, anatomy = phantom.gl, phantom.anatomy
    seq = dtom_sequence(gl, anatomy)
    assert np.allclose(seq, [dtom(p, anatomy) for p in gl.contacts], atol=1e-12)
    seq = dtobm_sequence(gl, anatomy)
    assert np.allclose(seq, [dtobm(p, anatomy) for p in gl.contacts], atol=1e-12)


def test_contacts_sit_on_st_side_of_bm(phantom):
    # ground truth places contacts inside scala tympani, below the ribbon
    assert (dtobm_sequence(phantom.gl, phantom.anatomy) < 0.0).all()


def test_signed_side_convention(anatomy):
    layout = anatomy.layout
    mid = anatomy.bm.vertices.reshape(layout.rings, layout.bm_points, 3)
    probe = mid[layout.rings // 2, layout.bm_points // 2]
    assert dtobm(probe + np.array([0.0, 0.0, 0.2]), anatomy) > 0.0
    assert dtobm(probe - np.array([0.0, 0.0, 0.2]), anatomy) < 0.0


# ---------------------------------------------------------------------------
# place-frequency map


def test_place_frequency_reference_values():
    assert place_frequency(0.0) == pytest.approx(20677.074311075532, rel=1e-12)
    assert place_frequency(450.0) == pytest.approx(1710.2665234154476, rel=1e-12)
    assert place_frequency(900.0) == pytest.approx(19.848, rel=1e-12)


def test_place_frequency_monotone_and_vectorized():
    doi = np.linspace(0.0, 900.0, 181)
    f = place_frequency(doi)
    assert isinstance(f, np.ndarray)
    assert (np.diff(f) < 0).all()
    assert place_frequency(float(doi[7])) == pytest.approx(f[7], rel=1e-15)


def test_place_frequency_validation():
    with pytest.raises(ValueError):
        place_frequency(-1.0)
    with pytest.raises(ValueError):
        place_frequency([100.0, 901.0])
    with pytest.raises(ValueError):
        FrequencyMapParams(shift=1.0)


# ---------------------------------------------------------------------------
# bundle I/O


def test_phantom_bundle_roundtrip(tmp_path, phantom):
    save_phantom(tmp_path / "ph", phantom)
    again = load_phantom(tmp_path / "ph")

    for name in STRUCTURES:
        a, b = getattr(phantom.anatomy, name), getattr(again.anatomy, name)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(phantom.anatomy.centerline_deg, again.anatomy.centerline_deg)
    assert np.array_equal(phantom.anatomy.centerline_points, again.anatomy.centerline_points)
    assert np.array_equal(phantom.anatomy.hook_landmark, again.anatomy.hook_landmark)
    assert np.array_equal(phantom.anatomy.frame.origin, again.anatomy.frame.origin)
    assert phantom.anatomy.provenance == again.anatomy.provenance
    assert phantom.anatomy.layout == again.anatomy.layout
    assert np.array_equal(phantom.gl.contacts, again.gl.contacts)
    assert phantom.gl.array_model == again.gl.array_model
