"""Dataset assembly, group rules, study runs, and the blinded rating layer."""

import dataclasses
import json

import numpy as np
import pytest

from igcip.harness import (
    METHODS,
    ControlParams,
    Dataset,
    RatingRecord,
    RatingSet,
    StudyParams,
    append_rating_record,
    assemble_groups,
    auto_localize,
    blinded_payload,
    boxplot_csv,
    control_configuration,
    full_scale_manifest,
    generate_phantom_population,
    load_manifest,
    load_phantom_dir,
    load_rating_records,
    load_rating_sets,
    load_report,
    make_rating_sets,
    prepare_dataset,
    rate_category,
    run_study,
    save_manifest,
    save_phantom_dir,
    save_rating_sets,
    save_report,
    stats_csv,
    summarize_ratings,
    uniform_manifest,
    usable_for,
)
from igcip.harness.dataset import LocalizationPipelineParams, simulate_method_surfaces
from igcip.harness.groups import SpecimenRecord
from igcip.harness.ratings import ARM_LABELS, ROLES
from igcip.harness.studies import report_to_dict
from igcip.localization import localization_errors
from igcip.planner import config_cost, select_configuration


@pytest.fixture(scope="module")
def report_a(small_dataset):
    return run_study("a", small_dataset, StudyParams(), seed=5)


@pytest.fixture(scope="module")
def report_b(small_dataset):
    return run_study("b", small_dataset, StudyParams(), seed=5)


@pytest.fixture(scope="module")
def report_c(small_dataset):
    return run_study("c", small_dataset, StudyParams(), seed=5)


# ---------------------------------------------------------------------------
# groups


def test_assemble_groups_rules():
    manifest = [
        SpecimenRecord(id=1),                                  # post ref, no migration
        SpecimenRecord(id=2, migration=True),                  # post ref, migrated
        SpecimenRecord(id=3, pre_uct=True),                    # both refs
        SpecimenRecord(id=4, pre_uct=True, migration=True),    # both refs, migrated
        SpecimenRecord(id=5, post_uct=False),                  # no reference at all
    ]
    g = assemble_groups(manifest)
    assert [r.id for r in g.g1] == [1, 3]
    assert [r.id for r in g.g2] == [3, 4]
    assert [r.id for r in g.g3] == [1, 2, 3, 4, 5]
    assert [r.id for r in g.g4] == [3]
    with pytest.raises(ValueError, match="empty"):
        assemble_groups([])


def test_full_scale_manifest_group_sizes():
    manifest = full_scale_manifest()
    assert [r.id for r in manifest] == list(range(1, 36))
    g = assemble_groups(manifest)
    assert (len(g.g1), len(g.g2), len(g.g3), len(g.g4)) == (30, 6, 35, 4)


def test_uniform_manifest():
    manifest = uniform_manifest(6)
    assert [r.id for r in manifest] == [1, 2, 3, 4, 5, 6]
    assert not any(r.pre_uct for r in manifest)
    assert not any(r.migration for r in manifest)
    assert all(r.pre_uct for r in uniform_manifest(3, pre_uct=True))


def test_manifest_roundtrip(tmp_path):
    manifest = full_scale_manifest()
    save_manifest(manifest, tmp_path / "m.json")
    assert load_manifest(tmp_path / "m.json") == manifest


# ---------------------------------------------------------------------------
# dataset assembly


def test_generate_phantom_population_deterministic(spec):
    a = generate_phantom_population(spec, 3, 21)
    b = generate_phantom_population(spec, 3, 21)
    c = generate_phantom_population(spec, 3, 22)
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa.gl.contacts, pb.gl.contacts)
    assert not np.array_equal(a[0].gl.contacts, c[0].gl.contacts)


def test_auto_localize_pipeline(gl, anatomy):
    params = LocalizationPipelineParams()
    al = None
    for ss in np.random.SeedSequence(3).spawn(8):
        try:
            al = auto_localize(gl, params, ss, anatomy=anatomy)
            break
        except ValueError:
            continue
    assert al is not None
    assert al.provenance == "AL"
    assert al.n_contacts == gl.n_contacts
    errors = localization_errors(al, gl)
    assert errors.mean < 1.0

    again = auto_localize(gl, params, ss, anatomy=anatomy)
    np.testing.assert_array_equal(again.contacts, al.contacts)


def test_simulate_method_surfaces_family(model, anatomy):
    family = simulate_method_surfaces(model, anatomy, np.random.SeedSequence(17))
    assert set(family) == set(METHODS)
    truth = anatomy.all_vertices()
    means = {
        m: float(np.linalg.norm(family[m].all_vertices() - truth, axis=1).mean())
        for m in METHODS
    }
    # one shared error quantile per family, and the three per-method error
    # distributions are ordered at every quantile
    assert 0.0 < means["m_a1"] < means["m_a3"] < means["m_a2"]
    for m in METHODS:
        assert family[m].provenance == m

    again = simulate_method_surfaces(model, anatomy, np.random.SeedSequence(17))
    np.testing.assert_array_equal(again["m_a2"].all_vertices(), family["m_a2"].all_vertices())


def test_usable_for(gl, anatomy):
    assert usable_for(anatomy, gl)
    far = anatomy.with_vertices(anatomy.all_vertices() + np.array([50.0, 0.0, 0.0]))
    assert not usable_for(far, gl)


def test_prepare_dataset_contents(small_dataset, spec):
    assert small_dataset.spec == spec
    assert len(small_dataset.specimens) == 4
    assert small_dataset.model.n_modes == 40
    for sp in small_dataset.specimens:
        assert sp.s0.provenance == "ground_truth"
        assert sp.gl.provenance == "GL"
        assert sp.al is not None and sp.al.provenance == "AL"
        assert set(sp.methods) == set(METHODS)
        for m in METHODS:
            assert sp.methods[m].provenance == m
            assert usable_for(sp.methods[m], sp.gl)


def test_prepare_dataset_deterministic(spec):
    phantoms = generate_phantom_population(spec, 2, 31)
    manifest = uniform_manifest(2)
    kw = dict(spec=spec, train_count=8, train_modes=6, localize=False)
    a = prepare_dataset(phantoms, manifest, 13, **kw)
    b = prepare_dataset(phantoms, manifest, 13, **kw)
    np.testing.assert_array_equal(a.model.mean, b.model.mean)
    for sa, sb in zip(a.specimens, b.specimens):
        assert sa.al is None and sb.al is None
        for m in METHODS:
            np.testing.assert_array_equal(
                sa.methods[m].all_vertices(), sb.methods[m].all_vertices()
            )


def test_prepare_dataset_validation(spec):
    phantoms = generate_phantom_population(spec, 2, 31)
    with pytest.raises(ValueError, match="one phantom per manifest record"):
        prepare_dataset(phantoms, uniform_manifest(3), 0, spec=spec)


def test_phantom_dir_roundtrip(tmp_path, spec):
    phantoms = generate_phantom_population(spec, 2, 31)
    manifest = uniform_manifest(2, pre_uct=True)
    save_phantom_dir(tmp_path / "data", phantoms, manifest, spec)
    loaded, loaded_manifest, loaded_spec = load_phantom_dir(tmp_path / "data")
    assert loaded_manifest == manifest
    assert loaded_spec == spec
    for orig, back in zip(phantoms, loaded):
        np.testing.assert_array_equal(orig.gl.contacts, back.gl.contacts)
        np.testing.assert_allclose(
            orig.anatomy.all_vertices(), back.anatomy.all_vertices(), atol=1e-12
        )


# ---------------------------------------------------------------------------
# studies


def test_study_a_cells(report_a):
    assert len(report_a.cells) == 4
    for cell in report_a.cells:
        assert cell.section == "a_localization"
        assert cell.method == "auto_loc"
        assert cell.reference_loc == "GL" and cell.auto_loc == "AL"
        assert cell.reference_anatomy == cell.auto_anatomy == "m_a1"
    methods = report_a.stats["sections"]["a_localization"]["methods"]
    assert methods["auto_loc"]["n"] == 4


def test_study_b_cells(report_b):
    sections = {c.section for c in report_b.cells}
    assert sections == {"b_methods", "b_synth"}
    by_section = {s: [c for c in report_b.cells if c.section == s] for s in sections}
    assert len(by_section["b_methods"]) == 12  # 4 specimens x 3 methods
    assert len(by_section["b_synth"]) == 12
    for cell in by_section["b_methods"]:
        assert cell.reference_anatomy == "ground_truth"
        assert cell.auto_anatomy == cell.method
        assert cell.reference_loc == cell.auto_loc == "GL"
    for cell in by_section["b_synth"]:
        assert cell.reference_anatomy == "m_a1"
        assert cell.auto_anatomy == cell.method
    pairwise = report_b.stats["sections"]["b_synth"]["pairwise"]
    assert set(pairwise) == {"m_a1_vs_m_a2", "m_a1_vs_m_a3", "m_a2_vs_m_a3"}
    for pair in pairwise.values():
        for metric in ("delta_doi", "delta_dtom", "delta_dtobm"):
            cell = pair[metric]
            assert 0.0 <= cell["p"] <= cell["p_adjusted"] <= 1.0
            assert cell["df"] == 3


def test_study_c_cells(report_c):
    by_section = {}
    for cell in report_c.cells:
        by_section.setdefault(cell.section, []).append(cell)
    assert set(by_section) == {"c_methods", "c_synth"}
    assert len(by_section["c_methods"]) == 12
    assert len(by_section["c_synth"]) == 12
    for cell in report_c.cells:
        assert cell.auto_loc == "AL" and cell.reference_loc == "GL"


def test_study_deterministic_and_seeded(small_dataset, report_b):
    same = run_study("b", small_dataset, StudyParams(), seed=5)
    assert report_to_dict(same) == report_to_dict(report_b)
    other = run_study("b", small_dataset, StudyParams(), seed=6)
    synth = lambda r: [c for c in r.cells if c.section == "b_synth"]
    assert any(
        not np.array_equal(x.auto_dvf.doi_deg, y.auto_dvf.doi_deg)
        for x, y in zip(synth(report_b), synth(other))
    )


def test_study_validation(small_dataset):
    with pytest.raises(ValueError, match="study must be one of"):
        run_study("x", small_dataset)
    stripped = Dataset(
        spec=small_dataset.spec,
        model=small_dataset.model,
        specimens=[dataclasses.replace(sp, al=None) for sp in small_dataset.specimens],
        manifest=small_dataset.manifest,
    )
    with pytest.raises(ValueError, match="missing automatic localization"):
        run_study("a", stripped)


def test_cost_delta_nonnegative(report_a, report_b, report_c):
    for report in (report_a, report_b, report_c):
        for cell in report.cells:
            assert cell.cost_delta >= 0.0


def test_report_roundtrip(tmp_path, report_b):
    save_report(report_b, tmp_path / "b.json")
    back = load_report(tmp_path / "b.json")
    assert report_to_dict(back) == report_to_dict(report_b)


def test_stats_csv_shape(report_b):
    lines = stats_csv(report_b).strip().splitlines()
    assert lines[0] == "specimen,section,method,metric,value"
    assert len(lines) == 1 + 5 * len(report_b.cells)
    for line in lines[1:]:
        float(line.rsplit(",", 1)[1])  # every value parses


def test_boxplot_csv_shape(report_b):
    lines = boxplot_csv(report_b).strip().splitlines()
    assert lines[0].startswith("section,method,metric,")
    assert len(lines) == 1 + 2 * 3 * 4  # sections x methods x metrics
    for line in lines[1:]:
        q1, q3 = map(float, line.split(",")[4:6])
        assert q1 <= q3


# ---------------------------------------------------------------------------
# ratings


def test_control_configuration_degrades_cost(report_a):
    cell = report_a.cells[0]
    ctrl = control_configuration(cell.ref_dvf, cell.ref_config, gamma=1.0)
    ref_cost = config_cost(cell.ref_dvf, cell.ref_config)
    assert config_cost(cell.ref_dvf, ctrl) >= 2.0 * ref_cost
    assert ctrl.label == ""
    assert ctrl.active.sum() >= 2


def test_make_rating_sets(report_a, report_b, report_c):
    sets = make_rating_sets([report_a, report_b, report_c], seed=3)
    assert len(sets) == 4 + 24 + 24
    assert len({s.set_id for s in sets}) == len(sets)
    for s in sets:
        assert sorted(s.roles.values()) == sorted(ROLES)
    # role-to-label assignment varies across sets
    assert len({s.label_of("automatic") for s in sets}) == 3

    again = make_rating_sets([report_a, report_b, report_c], seed=3)
    assert [s.set_id for s in again] == [s.set_id for s in sets]
    assert [s.roles for s in again] == [s.roles for s in sets]
    with pytest.raises(ValueError, match="duplicate rating set id"):
        make_rating_sets([report_a, report_a])


def test_blinded_payload_hides_roles(report_a):
    sets = make_rating_sets(report_a, seed=3)
    payload = blinded_payload(sets[0])
    text = json.dumps(payload)
    for role in ROLES:
        assert role not in text
    assert payload["n_contacts"] == len(sets[0].ref_dvf)
    assert set(payload["configurations"]) == set(ARM_LABELS)
    for cfg in payload["configurations"].values():
        assert set(cfg["active"]) <= {0, 1}
        assert len(cfg["active"]) == payload["n_contacts"]


def test_rating_set_validation(report_a):
    sets = make_rating_sets(report_a, seed=3)
    good = sets[0]
    with pytest.raises(ValueError, match="roles"):
        RatingSet(
            set_id="x", specimen_id=1, study="a", section="s", method="m",
            ref_dvf=good.ref_dvf, arms=good.arms,
            roles={"A": "automatic", "B": "automatic", "C": "control"},
        )


def test_rating_record_validation():
    ranks = {"A": 1, "B": "2", "C": 3}
    flags = {"A": True, "B": False, "C": 1}
    record = RatingRecord(set_id="s", rater="r", ranks=ranks, acceptable=flags)
    assert record.ranks == {"A": 1, "B": 2, "C": 3}
    assert record.acceptable == {"A": True, "B": False, "C": True}
    assert record.timestamp  # filled in automatically
    with pytest.raises(ValueError, match="keyed by"):
        RatingRecord(set_id="s", rater="r", ranks={"A": 1, "B": 2}, acceptable=flags)
    with pytest.raises(ValueError, match="ranks must be in"):
        RatingRecord(set_id="s", rater="r", ranks={"A": 0, "B": 2, "C": 3}, acceptable=flags)


def test_rating_records_roundtrip(tmp_path):
    path = tmp_path / "records.jsonl"
    first = RatingRecord(
        set_id="s1", rater="r", ranks={"A": 1, "B": 2, "C": 3},
        acceptable={"A": True, "B": True, "C": False},
    )
    second = RatingRecord(
        set_id="s2", rater="r", ranks={"A": 2, "B": 2, "C": 1},
        acceptable={"A": False, "B": True, "C": True},
    )
    append_rating_record(first, path)
    append_rating_record(second, path)
    assert load_rating_records(path) == [first, second]
    assert load_rating_records(tmp_path / "missing.jsonl") == []


def rate_all(sets, auto_rank, ref_rank, auto_ok):
    """Scripted records with fixed per-role ranks and flags."""
    records = []
    for s in sets:
        ranks = {
            s.label_of("automatic"): auto_rank,
            s.label_of("reference"): ref_rank,
            s.label_of("control"): 3,
        }
        flags = {
            s.label_of("automatic"): auto_ok,
            s.label_of("reference"): True,
            s.label_of("control"): False,
        }
        records.append(RatingRecord(set_id=s.set_id, rater="t", ranks=ranks, acceptable=flags))
    return records


def test_rate_category_paths(report_a):
    sets = make_rating_sets(report_a, seed=3)
    s = next((x for x in sets if x.arms["A"].bitmask != x.arms["B"].bitmask
              or x.arms["B"].bitmask != x.arms["C"].bitmask), None)
    replicate = s.arms[s.label_of("automatic")].bitmask == s.arms[s.label_of("reference")].bitmask

    def category(auto_rank, ref_rank, auto_ok):
        record = rate_all([s], auto_rank, ref_rank, auto_ok)[0]
        return rate_category(record, s)

    if replicate:
        assert category(2, 1, True) == "replicate"
    else:
        assert category(2, 1, False) == "not_acceptable"
        assert category(1, 2, True) == "better"
        assert category(2, 2, True) == "equally_good"
        assert category(2, 1, True) == "acceptable"


def test_summarize_ratings_conserves_counts(report_a, report_b):
    sets = make_rating_sets([report_a, report_b], seed=3)
    records = rate_all(sets, auto_rank=2, ref_rank=1, auto_ok=True)
    summary = summarize_ratings(records, sets)
    assert summary["total_records"] == len(sets)
    assert set(summary["studies"]) == {"a", "b"}
    n_by_study = {st: sum(1 for s in sets if s.study == st) for st in ("a", "b")}
    for st, block in summary["studies"].items():
        assert block["n"] == n_by_study[st]
        assert sum(block["categories"].values()) == block["n"]
        assert block["categories"]["better"] == 0
        assert block["reference_acceptance_rate"] == 1.0
        assert block["control_acceptance_rate"] == 0.0
        assert 0.0 <= block["mcnemar_auto_vs_control_p"] <= 1.0
    overall = summary["overall"]
    assert overall["n"] == len(sets)
    assert overall["automatic_acceptance_rate"] == 1.0

    stray = RatingRecord(
        set_id="nope", rater="t", ranks={"A": 1, "B": 2, "C": 3},
        acceptable={"A": True, "B": True, "C": True},
    )
    with pytest.raises(ValueError, match="no rating set"):
        summarize_ratings(records + [stray], sets)


def test_rating_sets_roundtrip(tmp_path, report_a):
    sets = make_rating_sets(report_a, seed=3)
    save_rating_sets(sets, tmp_path / "sets.json")
    back = load_rating_sets(tmp_path / "sets.json")
    assert [s.set_id for s in back] == [s.set_id for s in sets]
    assert [s.roles for s in back] == [s.roles for s in sets]
    for orig, b in zip(sets, back):
        np.testing.assert_array_equal(orig.ref_dvf.doi_deg, b.ref_dvf.doi_deg)
        for label in ARM_LABELS:
            assert orig.arms[label].bitmask == b.arms[label].bitmask
