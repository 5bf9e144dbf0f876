"""Sensitivity studies over a prepared dataset.

Each study compares an automatic pipeline variant against a reference on a
specimen group, cell by cell: build both DVFs, select both configurations,
evaluate the automatic configuration on the reference DVF, and record the
per-contact metric differences plus the hamming distance between the two
configurations.

Study a varies the localization (GL vs automatic) on fixed anatomy. Study b
varies the anatomy (simulated method surfaces against ground truth on group 2;
synthesized surfaces against the method-1 baseline on group 3) with GL
contacts. Study c combines anatomy variation with automatic localization
(groups 4 and 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from ..localization import ErrorSummary
from ..phantom import DEFAULT_FREQUENCY_MAP, FrequencyMapParams
from ..planner import (
    DVF,
    CostParams,
    ElectrodeConfiguration,
    build_dvf,
    cost_delta,
    hamming,
    select_configuration,
)
from ..stats import bonferroni, boxplot_stats, paired_t_test
from .dataset import METHODS, Dataset, simulate_method_surfaces, usable_for
from .groups import assemble_groups

STUDIES = ("a", "b", "c")
DELTA_METRICS = ("delta_doi", "delta_dtom", "delta_dtobm")


@dataclass(frozen=True)
class StudyParams:
    cost: CostParams = CostParams()
    fmap: FrequencyMapParams = DEFAULT_FREQUENCY_MAP

    def as_dict(self):
        return {"cost": self.cost.as_dict(), "fmap": vars(self.fmap).copy()}

    @classmethod
    def from_dict(cls, d) -> "StudyParams":
        return cls(cost=CostParams.from_dict(d["cost"]), fmap=FrequencyMapParams(**d["fmap"]))


@dataclass
class StudyCell:
    """One (specimen, method) comparison within a study section."""

    section: str
    specimen_id: int
    method: str
    reference_anatomy: str
    reference_loc: str
    auto_anatomy: str
    auto_loc: str
    ref_dvf: DVF
    auto_dvf: DVF
    ref_config: ElectrodeConfiguration
    auto_config: ElectrodeConfiguration
    cost_delta: float
    hamming: int
    delta_doi: ErrorSummary
    delta_dtom: ErrorSummary
    delta_dtobm: ErrorSummary


@dataclass
class StudyReport:
    study: str
    seed: int
    params: StudyParams
    cells: list
    stats: dict = field(default_factory=dict)


def _make_cell(section, record, method, ref_anat, ref_loc, auto_anat, auto_loc, params: StudyParams) -> StudyCell:
    ref_dvf = build_dvf(ref_loc, ref_anat, params.fmap)
    auto_dvf = build_dvf(auto_loc, auto_anat, params.fmap)
    ref_config = select_configuration(ref_dvf, params.cost)
    auto_config = select_configuration(auto_dvf, params.cost)
    return StudyCell(
        section=section,
        specimen_id=record.id,
        method=method,
        reference_anatomy=ref_anat.provenance,
        reference_loc=ref_loc.provenance,
        auto_anatomy=auto_anat.provenance,
        auto_loc=auto_loc.provenance,
        ref_dvf=ref_dvf,
        auto_dvf=auto_dvf,
        ref_config=ref_config,
        auto_config=auto_config,
        cost_delta=cost_delta(ref_dvf, auto_config, ref_config, params.cost),
        hamming=hamming(auto_config, ref_config),
        delta_doi=ErrorSummary.from_errors(np.abs(auto_dvf.doi_deg - ref_dvf.doi_deg)),
        delta_dtom=ErrorSummary.from_errors(np.abs(auto_dvf.dtom_mm - ref_dvf.dtom_mm)),
        delta_dtobm=ErrorSummary.from_errors(np.abs(auto_dvf.dtobm_mm - ref_dvf.dtobm_mm)),
    )


def _require(condition, section, record, what):
    if not condition:
        raise ValueError(f"section {section}, specimen {record.id}: missing {what}")


def _synth_cells(section, record, sp, auto_loc, model, ss, params, attempts: int = 5):
    # one coupled method family per specimen; a far-tail family can be
    # unmeasurable against this specimen's array (see dataset.usable_for),
    # in which case it is redrawn from seeded children
    base = sp.methods["m_a1"]
    last_error = None
    for child in ss.spawn(attempts):
        try:
            family = simulate_method_surfaces(model, base, child)
        except ValueError as exc:
            last_error = exc
            continue
        if not all(usable_for(surf, sp.gl) for surf in family.values()):
            last_error = ValueError("synthesized surface incompatible with the implanted array")
            continue
        try:
            return [
                _make_cell(section, record, method, base, sp.gl, family[method], auto_loc, params)
                for method in METHODS
            ]
        except ValueError as exc:
            last_error = exc
    raise ValueError(f"section {section}, specimen {record.id}: {last_error}")


def run_study(study: str, dataset: Dataset, params: StudyParams = StudyParams(), seed=0) -> StudyReport:
    """Run one study over a prepared dataset; deterministic given seed."""
    if study not in STUDIES:
        raise ValueError(f"study must be one of {STUDIES}")
    groups = assemble_groups(dataset.manifest)
    by_id = {sp.record.id: sp for sp in dataset.specimens}
    root = np.random.SeedSequence(seed)
    study_ss = root.spawn(len(STUDIES))[STUDIES.index(study)]

    cells = []
    if study == "a":
        for record in groups.g1:
            sp = by_id[record.id]
            _require(sp.al is not None, "a_localization", record, "automatic localization")
            cells.append(
                _make_cell(
                    "a_localization", record, "auto_loc", sp.methods["m_a1"], sp.gl,
                    sp.methods["m_a1"], sp.al, params,
                )
            )
    elif study == "b":
        for record in groups.g2:
            sp = by_id[record.id]
            for method in METHODS:
                cells.append(
                    _make_cell(
                        "b_methods", record, method, sp.s0, sp.gl,
                        sp.methods[method], sp.gl, params,
                    )
                )
        synth_ss = iter(study_ss.spawn(len(groups.g3)))
        for record in groups.g3:
            sp = by_id[record.id]
            cells.extend(
                _synth_cells("b_synth", record, sp, sp.gl, dataset.model, next(synth_ss), params)
            )
    else:
        for record in groups.g4:
            sp = by_id[record.id]
            _require(sp.al is not None, "c_methods", record, "automatic localization")
            for method in METHODS:
                cells.append(
                    _make_cell(
                        "c_methods", record, method, sp.s0, sp.gl,
                        sp.methods[method], sp.al, params,
                    )
                )
        synth_ss = iter(study_ss.spawn(len(groups.g1)))
        for record in groups.g1:
            sp = by_id[record.id]
            _require(sp.al is not None, "c_synth", record, "automatic localization")
            cells.extend(
                _synth_cells("c_synth", record, sp, sp.al, dataset.model, next(synth_ss), params)
            )

    report = StudyReport(study=study, seed=int(seed), params=params, cells=cells)
    report.stats = compute_study_stats(report)
    return report


def compute_study_stats(report: StudyReport) -> dict:
    """Per-section method summaries plus Bonferroni-corrected pairwise t-tests."""
    sections = {}
    for section in sorted({c.section for c in report.cells}):
        sec_cells = [c for c in report.cells if c.section == section]
        methods = sorted({c.method for c in sec_cells})
        per_method = {}
        for method in methods:
            mc = [c for c in sec_cells if c.method == method]
            per_method[method] = {
                "n": len(mc),
                "delta_doi_mean": float(np.mean([c.delta_doi.mean for c in mc])),
                "delta_dtom_mean": float(np.mean([c.delta_dtom.mean for c in mc])),
                "delta_dtobm_mean": float(np.mean([c.delta_dtobm.mean for c in mc])),
                "cost_delta_mean": float(np.mean([c.cost_delta for c in mc])),
                "hamming_mean": float(np.mean([c.hamming for c in mc])),
            }
        pairwise = {}
        if len(methods) > 1:
            raw = []
            keys = []
            for m1, m2 in combinations(methods, 2):
                x_cells = {c.specimen_id: c for c in sec_cells if c.method == m1}
                y_cells = {c.specimen_id: c for c in sec_cells if c.method == m2}
                shared = sorted(set(x_cells) & set(y_cells))
                for metric in DELTA_METRICS:
                    x = [getattr(x_cells[i], metric).mean for i in shared]
                    y = [getattr(y_cells[i], metric).mean for i in shared]
                    result = paired_t_test(x, y)
                    keys.append((f"{m1}_vs_{m2}", metric))
                    raw.append(result)
            adjusted = bonferroni([r.p for r in raw], len(raw))
            for (pair, metric), result, p_adj in zip(keys, raw, adjusted):
                pairwise.setdefault(pair, {})[metric] = {
                    "t": result.t,
                    "df": result.df,
                    "p": result.p,
                    "p_adjusted": p_adj,
                }
        sections[section] = {"methods": per_method, "pairwise": pairwise}
    return {"sections": sections}


# ---------------------------------------------------------------------------
# serialization


def _dvf_to_dict(dvf: DVF) -> dict:
    return {
        "doi_deg": dvf.doi_deg.tolist(),
        "dtom_mm": dvf.dtom_mm.tolist(),
        "dtobm_mm": dvf.dtobm_mm.tolist(),
        "frequency_hz": dvf.frequency_hz.tolist(),
        "anatomy_provenance": dvf.anatomy_provenance,
        "localization_provenance": dvf.localization_provenance,
    }


def _dvf_from_dict(d) -> DVF:
    return DVF(
        doi_deg=np.asarray(d["doi_deg"]),
        dtom_mm=np.asarray(d["dtom_mm"]),
        dtobm_mm=np.asarray(d["dtobm_mm"]),
        frequency_hz=np.asarray(d["frequency_hz"]),
        anatomy_provenance=d["anatomy_provenance"],
        localization_provenance=d["localization_provenance"],
    )


def _cell_to_dict(c: StudyCell) -> dict:
    return {
        "section": c.section,
        "specimen_id": c.specimen_id,
        "method": c.method,
        "reference_anatomy": c.reference_anatomy,
        "reference_loc": c.reference_loc,
        "auto_anatomy": c.auto_anatomy,
        "auto_loc": c.auto_loc,
        "ref_dvf": _dvf_to_dict(c.ref_dvf),
        "auto_dvf": _dvf_to_dict(c.auto_dvf),
        "ref_config": c.ref_config.as_dict(),
        "auto_config": c.auto_config.as_dict(),
        "cost_delta": c.cost_delta,
        "hamming": c.hamming,
        "delta_doi": c.delta_doi.as_dict(),
        "delta_dtom": c.delta_dtom.as_dict(),
        "delta_dtobm": c.delta_dtobm.as_dict(),
    }


def _cell_from_dict(d) -> StudyCell:
    return StudyCell(
        section=d["section"],
        specimen_id=int(d["specimen_id"]),
        method=d["method"],
        reference_anatomy=d["reference_anatomy"],
        reference_loc=d["reference_loc"],
        auto_anatomy=d["auto_anatomy"],
        auto_loc=d["auto_loc"],
        ref_dvf=_dvf_from_dict(d["ref_dvf"]),
        auto_dvf=_dvf_from_dict(d["auto_dvf"]),
        ref_config=ElectrodeConfiguration.from_dict(d["ref_config"]),
        auto_config=ElectrodeConfiguration.from_dict(d["auto_config"]),
        cost_delta=float(d["cost_delta"]),
        hamming=int(d["hamming"]),
        delta_doi=ErrorSummary.from_errors(d["delta_doi"]["per_item"]),
        delta_dtom=ErrorSummary.from_errors(d["delta_dtom"]["per_item"]),
        delta_dtobm=ErrorSummary.from_errors(d["delta_dtobm"]["per_item"]),
    )


def report_to_dict(report: StudyReport) -> dict:
    return {
        "study": report.study,
        "seed": report.seed,
        "params": report.params.as_dict(),
        "cells": [_cell_to_dict(c) for c in report.cells],
        "stats": report.stats,
    }


def report_from_dict(d) -> StudyReport:
    return StudyReport(
        study=d["study"],
        seed=int(d["seed"]),
        params=StudyParams.from_dict(d["params"]),
        cells=[_cell_from_dict(c) for c in d["cells"]],
        stats=d.get("stats", {}),
    )


def save_report(report: StudyReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report)))


def load_report(path) -> StudyReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def stats_csv(report: StudyReport) -> str:
    """One row per specimen x method x metric."""
    rows = ["specimen,section,method,metric,value"]
    for c in report.cells:
        rows.append(f"{c.specimen_id},{c.section},{c.method},delta_doi_mean,{c.delta_doi.mean!r}")
        rows.append(f"{c.specimen_id},{c.section},{c.method},delta_dtom_mean,{c.delta_dtom.mean!r}")
        rows.append(f"{c.specimen_id},{c.section},{c.method},delta_dtobm_mean,{c.delta_dtobm.mean!r}")
        rows.append(f"{c.specimen_id},{c.section},{c.method},cost_delta,{c.cost_delta!r}")
        rows.append(f"{c.specimen_id},{c.section},{c.method},hamming,{c.hamming}")
    return "\n".join(rows) + "\n"


def boxplot_csv(report: StudyReport) -> str:
    """Boxplot statistics per section x method x metric, for plotting."""
    rows = ["section,method,metric,median,q1,q3,whisker_lo,whisker_hi,n_outliers"]
    sections = sorted({c.section for c in report.cells})
    for section in sections:
        sec_cells = [c for c in report.cells if c.section == section]
        for method in sorted({c.method for c in sec_cells}):
            mc = [c for c in sec_cells if c.method == method]
            for metric in DELTA_METRICS + ("cost_delta",):
                if metric == "cost_delta":
                    values = [c.cost_delta for c in mc]
                else:
                    values = [getattr(c, metric).mean for c in mc]
                b = boxplot_stats(values)
                rows.append(
                    f"{section},{method},{metric},{b.median!r},{b.q1!r},{b.q3!r},"
                    f"{b.whisker_lo!r},{b.whisker_hi!r},{len(b.outliers)}"
                )
    return "\n".join(rows) + "\n"
