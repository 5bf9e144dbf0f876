"""Acceptance battery: one test per release gate, each printing its headline numbers.

These tests pin the end-to-end behavior of the toolkit at stated tolerances:
exactness of the two optimizers against brute-force enumeration, accuracy of
the synthetic localization pipeline, calibration of the error-injection
machinery, the sensitivity ordering of the simulated segmentation methods
across seeded study runs, agreement of the hand-rolled statistics with
reference computations, geometry oracles, dataset bookkeeping at full scale,
and a scripted end-to-end rating session against the HTTP API.

Runtime for the full battery is dominated by the seeded study replications
(several minutes); every test is deterministic.
"""

import itertools
import time

import mpmath as mp
import numpy as np
import pytest
import scipy.spatial.transform
from fastapi.testclient import TestClient
from scipy import stats as scipy_stats

from igcip.correspondence import IcpParams, rigid_icp
from igcip.geometry import RigidTransform
from igcip.geometry.core import TriMesh
from igcip.geometry.distances import (
    brute_force_point_to_mesh,
    corresponding_point_errors,
    point_to_mesh_distance,
)
from igcip.harness import (
    METHOD_MOMENTS,
    StudyParams,
    assemble_groups,
    full_scale_manifest,
    generate_phantom_population,
    load_rating_records,
    make_app,
    make_rating_sets,
    prepare_dataset,
    run_study,
    uniform_manifest,
)
from igcip.harness.dataset import LocalizationPipelineParams, auto_localize
from igcip.harness.ratings import ROLES
from igcip.localization import Candidate, ChainWeights, localization_errors, localize_array
from igcip.phantom import STRUCTURES, PhantomSpec, place_frequency
from igcip.planner import DVF, CostParams, config_cost, select_configuration
from igcip.shape_model import gamma_from_moments, perturb_to_target_error, sample_gamma
from igcip.stats import mcnemar_midp, paired_t_test


def report(line):
    print(f"[acceptance] {line}", flush=True)


@pytest.fixture(scope="module")
def paper_scale():
    """Full-scale dataset (35 specimens, bundled manifest) and all three studies."""
    spec = PhantomSpec()
    phantoms = generate_phantom_population(spec, 35, 3001)
    dataset = prepare_dataset(phantoms, full_scale_manifest(), 3002, spec=spec, localize=True)
    return [run_study(s, dataset, StudyParams(), 77) for s in ("a", "b", "c")]


# ---------------------------------------------------------------------------
# configuration selector vs exhaustive enumeration


def random_dvf(rng, n):
    doi = rng.uniform(0.0, 40.0) + np.cumsum(rng.uniform(5.0, 60.0, size=n))
    doi = np.minimum(doi, 899.0)
    doi += np.arange(n) * 1e-6
    return DVF(
        doi_deg=doi,
        dtom_mm=rng.uniform(0.0, 1.2, size=n),
        dtobm_mm=rng.normal(0.0, 0.5, size=n),
        frequency_hz=place_frequency(doi),
    )


def mask_table(n, min_active):
    bits = ((np.arange(1 << n, dtype=np.uint32)[:, None] >> np.arange(n)) & 1).astype(bool)
    return bits[bits.sum(axis=1) >= min_active]


def enumerate_configurations(dvf, p, bits):
    """Cost of every admissible active set, reproducing config_cost float ops.

    Accumulates start gap, consecutive-pair terms left to right, then the end
    gap, with the exact expression grouping of config_cost, so the minimum is
    bit-identical to evaluating the winning subset directly.
    """
    theta = dvf.doi_deg.astype(float)
    s = p.beta0 + p.beta1 * np.maximum(dvf.dtom_mm, 0.0)
    cost = np.zeros(len(bits))
    last = np.full(len(bits), -1)
    for j in range(len(theta)):
        on = bits[:, j]
        prev = on & (last >= 0)
        li = last[prev]
        delta = theta[j] - theta[li]
        t1 = (s[li] + s[j]) - delta
        t2 = (delta - s[li]) - s[j]
        cost[prev] += np.maximum(0.0, t1) + p.lam * np.maximum(0.0, t2)
        cost[on & (last < 0)] += p.lam * max(0.0, theta[j] - theta[0])
        last[on] = j
    cost += p.lam * np.maximum(0.0, theta[-1] - theta[last])

    cmin = cost.min()
    ties = np.flatnonzero(cost == cmin)
    counts = bits[ties].sum(axis=1)
    ties = ties[counts == counts.max()]
    indices = min(tuple(int(i) for i in np.flatnonzero(bits[row])) for row in ties)
    return cmin, indices


def test_configuration_selector_matches_exhaustive_enumeration():
    p = CostParams()
    rng = np.random.default_rng(2024)
    t0 = time.time()
    checked = 0
    for n in (4, 8, 12, 16):
        bits = mask_table(n, p.min_active)
        for _ in range(200):
            dvf = random_dvf(rng, n)
            best_cost, best_indices = enumerate_configurations(dvf, p, bits)
            selected = select_configuration(dvf, p)
            assert config_cost(dvf, selected, p) == best_cost
            assert selected.indices == best_indices
            checked += 1
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(f"selector exact on {checked} DVFs (n in 4/8/12/16) in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# chain search vs exhaustive ordered-subset enumeration


def test_chain_search_matches_exhaustive_enumeration():
    weights = ChainWeights(intensity=0.4, spacing=10.0)
    rng = np.random.default_rng(4181)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(2, 6))
        k = int(rng.integers(n, 10))
        pos = np.zeros((k, 3))
        pos[:n, 0] = np.arange(n) * 1.0
        pos += rng.normal(0.0, 0.25, size=(k, 3))
        pos[n:] += rng.uniform(-1.0, 1.0, size=(k - n, 3))
        score = rng.uniform(0.0, 5.0, size=k)

        perms = np.array(list(itertools.permutations(range(k), n)))
        seg = np.linalg.norm(np.diff(pos[perms], axis=1), axis=2)
        cost = (
            -weights.intensity * score[perms].sum(axis=1)
            + weights.spacing * ((seg - 1.0) ** 2).sum(axis=1)
        )
        b = int(np.argmin(cost))
        expect, expect_cost = tuple(int(i) for i in perms[b]), float(cost[b])

        cands = [Candidate(position=p, score=s) for p, s in zip(pos, score)]
        found = localize_array(cands, n, 1.0, weights=weights)
        found_idx = tuple(
            int(np.flatnonzero((pos == p).all(axis=1))[0]) for p in found.contacts
        )
        # the chain cost is symmetric under reversal, so the winner is unique
        # only up to orientation; check identity modulo that plus the cost
        assert found_idx in (expect, tuple(reversed(expect)))
        seg_f = np.linalg.norm(np.diff(pos[list(found_idx)], axis=0), axis=1)
        found_cost = (
            -weights.intensity * score[list(found_idx)].sum()
            + weights.spacing * ((seg_f - 1.0) ** 2).sum()
        )
        assert found_cost <= expect_cost + 1e-9
        checked += 1
    report(f"chain search exact on {checked} instances (k <= 9, n <= 5)")


# ---------------------------------------------------------------------------
# synthetic localization accuracy


def test_automatic_localization_accuracy_on_synthetic_volumes():
    params = LocalizationPipelineParams()  # 0.3 mm voxels, psf 0.15 mm, SNR 10
    phantoms = generate_phantom_population(PhantomSpec(), 100, 2025)
    pooled = []
    root = np.random.SeedSequence(2026)
    for phantom, ss in zip(phantoms, root.spawn(len(phantoms))):
        al = None
        last_error = None
        for attempt in ss.spawn(8):
            try:
                al = auto_localize(phantom.gl, params, attempt, anatomy=phantom.anatomy)
                break
            except ValueError as exc:
                last_error = exc
        assert al is not None, last_error
        pooled.extend(localization_errors(al, phantom.gl).per_item)
    mean = float(np.mean(pooled))
    assert mean < 0.52  # one voxel diagonal at 0.3 mm spacing
    report(
        f"automatic localization mean error {mean:.4f} mm over 100 phantoms "
        f"(< 0.52 required; 0.13 anchor met: {mean <= 0.13})"
    )


# ---------------------------------------------------------------------------
# perturbation targeting


def test_perturbation_hits_error_targets(model, anatomy):
    targets = (0.05, 0.10, 0.23, 0.30, 0.41, 1.0)
    root = np.random.SeedSequence(515)
    lines = []
    for target in targets:
        achieved = []
        for ss in root.spawn(50):
            out = None
            for sub in (ss, *ss.spawn(5)):
                # a large perturbation can break the derived centerline of the
                # result; redraw the direction as the simulators do
                try:
                    out = perturb_to_target_error(model, anatomy, target, sub)
                    break
                except ValueError:
                    continue
            assert out is not None
            achieved.append(
                float(corresponding_point_errors(out.all_vertices(), anatomy.all_vertices()).mean())
            )
        rel = abs(float(np.mean(achieved)) - target) / target
        assert rel < 0.01
        lines.append(f"{target:g}:{rel:.1e}")
    report("perturbation pooled-mean relative errors " + " ".join(lines))


# ---------------------------------------------------------------------------
# gamma moments


def test_gamma_sampler_reproduces_moments():
    for mean, std in ((0.23, 0.12), (0.41, 0.15)):
        params = gamma_from_moments(mean, std)
        draws = sample_gamma(params, np.random.SeedSequence(864), 10**6)
        m, s = float(draws.mean()), float(draws.std())
        assert abs(m - mean) / mean < 0.01
        assert abs(s - std) / std < 0.01
        report(f"gamma({mean}, {std}): sampled mean {m:.5f} std {s:.5f} from 1e6 draws")


# ---------------------------------------------------------------------------
# sensitivity ordering across seeded study runs


def test_method_sensitivity_ordering_across_seeded_runs():
    spec = PhantomSpec()
    phantoms = generate_phantom_population(spec, 30, 42)
    dataset = prepare_dataset(
        phantoms, uniform_manifest(30, pre_uct=False), 43, spec=spec, localize=True
    )
    pairs = ("m_a1_vs_m_a2", "m_a1_vs_m_a3", "m_a2_vs_m_a3")
    metrics = ("delta_doi", "delta_dtom", "delta_dtobm")
    for study, section in (("b", "b_synth"), ("c", "c_synth")):
        ordering_runs = 0
        significant = {(p, m): 0 for p in pairs for m in metrics}
        for i in range(20):
            rep = run_study(study, dataset, StudyParams(), 1000 + i)
            assert all(c.cost_delta >= 0.0 for c in rep.cells)
            sec = rep.stats["sections"][section]
            means = sec["methods"]
            ordering_runs += all(
                means["m_a1"][k] < means["m_a3"][k] < means["m_a2"][k]
                for k in ("delta_doi_mean", "delta_dtom_mean", "delta_dtobm_mean")
            )
            for p in pairs:
                for m in metrics:
                    significant[(p, m)] += sec["pairwise"][p][m]["p_adjusted"] < 0.05
        assert ordering_runs >= 18  # >= 90% of 20 runs
        worst = min(significant.values())
        assert worst >= 11  # every pairwise test rejects in the majority of runs
        report(
            f"study {study}: method ordering held in {ordering_runs}/20 runs; "
            f"weakest pairwise test significant in {worst}/20"
        )


# ---------------------------------------------------------------------------
# statistics oracles


def t_density_tail(t, df):
    """Two-sided tail probability by numerical integration of the t density."""
    mp.mp.dps = 40
    t = mp.mpf(abs(float(t)))
    v = mp.mpf(df)
    coef = mp.gamma((v + 1) / 2) / (mp.sqrt(v * mp.pi) * mp.gamma(v / 2))
    return float(2 * mp.quad(lambda x: coef * (1 + x * x / v) ** (-(v + 1) / 2), [t, mp.inf]))


def test_paired_t_and_mcnemar_match_reference_computations():
    rng = np.random.default_rng(99)
    worst_t = 0.0
    for _ in range(50):
        n = int(rng.integers(3, 31))
        x = rng.normal(0.0, 1.0, n)
        y = x + rng.normal(0.1, 0.8, n)
        result = paired_t_test(x, y)
        worst_t = max(worst_t, abs(result.p - t_density_tail(result.t, result.df)))
    assert worst_t <= 1e-9

    worst_m = 0.0
    for total in range(0, 21):
        for b in range(total + 1):
            c = total - b
            outcomes = [(True, False)] * b + [(False, True)] * c + [(True, True), (False, False)]
            got = mcnemar_midp(outcomes)
            if total == 0:
                expect = 1.0
            else:
                k = min(b, c)
                expect = min(
                    1.0,
                    2.0 * scipy_stats.binom.cdf(k, total, 0.5)
                    - scipy_stats.binom.pmf(k, total, 0.5),
                )
            worst_m = max(worst_m, abs(got - expect))
    assert worst_m <= 1e-12
    report(
        f"paired t worst |dp| {worst_t:.2e} over 50 cases; "
        f"mid-p McNemar worst |dp| {worst_m:.2e} over all b+c <= 20"
    )


# ---------------------------------------------------------------------------
# geometry oracles


def test_mesh_distance_and_registration_oracles():
    phantoms = generate_phantom_population(PhantomSpec(), 3, 404)
    meshes = [getattr(ph.anatomy, name) for ph in phantoms for name in STRUCTURES][:10]
    rng = np.random.default_rng(405)
    worst = 0.0
    for mesh in meshes:
        lo = mesh.vertices.min(axis=0) - 2.0
        hi = mesh.vertices.max(axis=0) + 2.0
        for q in rng.uniform(lo, hi, size=(1000, 3)):
            fast = point_to_mesh_distance(q, mesh)
            slow = brute_force_point_to_mesh(q, mesh)
            worst = max(worst, abs(fast.distance - slow.distance))
    assert worst <= 1e-12

    coarse = PhantomSpec(
        rings_per_turn=16, st_ring_points=7, sv_ring_points=7, ar_ring_points=5,
        variation=1.2,
    )
    family = generate_phantom_population(coarse, 3, 99)
    planted = [
        ([0.0025, -0.004, 0.003], [0.012, -0.008, 0.016]),
        ([-0.003, 0.002, -0.0015], [-0.01, 0.006, 0.009]),
        ([0.001, 0.0035, -0.002], [0.007, -0.011, -0.005]),
    ]
    params = IcpParams(max_iterations=500, convergence_tol=1e-10)
    worst_rms = 0.0
    for ph, (rotvec, translation) in zip(family, planted):
        mesh = ph.anatomy.st
        rot = scipy.spatial.transform.Rotation.from_rotvec(rotvec).as_matrix()
        transform = RigidTransform(rot, np.array(translation))
        target = TriMesh(transform.apply(mesh.vertices), mesh.triangles)
        result = rigid_icp(mesh.vertices[::2], target, params=params)
        worst_rms = max(worst_rms, result.rms)
    assert worst_rms <= 1e-6
    report(
        f"BVH-vs-brute worst |dd| {worst:.2e} over 10 meshes x 1000 queries; "
        f"ICP worst planted-transform rms {worst_rms:.2e} mm"
    )


# ---------------------------------------------------------------------------
# full-scale bookkeeping


def test_group_assembly_and_full_scale_rating_set_count(paper_scale):
    groups = assemble_groups(full_scale_manifest())
    sizes = tuple(len(g) for g in groups)
    assert sizes == (30, 6, 35, 4)
    assert [len(r.cells) for r in paper_scale] == [30, 123, 102]
    sets = make_rating_sets(paper_scale, seed=78)
    assert len(sets) == 255
    report(f"groups {sizes}; full-scale studies yield {len(sets)} rating sets")


def test_automatic_configuration_never_beats_reference(paper_scale):
    checked = 0
    for rep in paper_scale:
        for cell in rep.cells:
            assert cell.cost_delta >= 0.0
            checked += 1
    report(f"cost delta nonnegative for all {checked} full-scale study cells")


# ---------------------------------------------------------------------------
# scripted rating session against the HTTP API


def test_scripted_rating_session_end_to_end(paper_scale, tmp_path):
    sets = make_rating_sets(paper_scale[0], seed=81)[:20]
    client = TestClient(make_app(sets, tmp_path / "records.jsonl"))

    def scripted_response(payload, step):
        labels = sorted(payload["configurations"])
        ranks = {label: 1 + (i + step) % 3 for i, label in enumerate(labels)}
        if step % 4 == 0:
            ranks[labels[2]] = ranks[labels[1]]  # ties are allowed
        acceptable = {label: ranks[label] < 3 for label in labels}
        return {"set_id": payload["set_id"], "ranks": ranks, "acceptable": acceptable}

    for step in range(20):
        out = client.get("/api/session/scripted/next")
        body = out.json()
        assert body["done"] is False
        for role in ROLES:  # blinding: no role labels anywhere on the wire
            assert role not in out.text
        response = scripted_response(body["set"], step)
        assert client.post("/api/session/scripted/response", json=response).status_code == 200
        if step == 9:
            dup = client.post("/api/session/scripted/response", json=response)
            assert dup.status_code == 409

    assert client.get("/api/session/scripted/next").json()["done"] is True
    records = load_rating_records(tmp_path / "records.jsonl")
    assert len(records) == 20
    assert [r.set_id for r in records] == [s.set_id for s in sets]
    for r in records:
        assert set(r.ranks.values()) <= {1, 2, 3}
        assert r.rater == "scripted" and r.timestamp

    summary = client.get("/api/session/scripted/summary").json()
    assert summary["total_records"] == 20
    assert sum(summary["overall"]["categories"].values()) == 20
    assert summary["studies"]["a"]["n"] == 20
    report("scripted session: 20 records persisted, blinded, duplicate rejected, counts conserved")
