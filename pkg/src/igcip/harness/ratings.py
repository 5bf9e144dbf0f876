"""Blinded rating sets, rating records, and rating summaries.

Every automatic configuration from a study report is bundled with its
reference configuration and an auto-generated control configuration into a
rating set. The three arms are presented under anonymous labels A/B/C in a
seeded-shuffled order; the role behind each label is kept server side and
never enters the presentation payload. Raters rank the three arms (ties
allowed) and flag each as acceptable or not; records append to a JSON-lines
file with an fsync per write so a crashed session can resume.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..planner import DVF, CostParams, ElectrodeConfiguration, config_cost
from ..stats import mcnemar_midp
from .studies import StudyReport, _dvf_from_dict, _dvf_to_dict

ARM_LABELS = ("A", "B", "C")
ROLES = ("automatic", "reference", "control")
CATEGORIES = ("replicate", "better", "equally_good", "acceptable", "not_acceptable")


@dataclass(frozen=True)
class ControlParams:
    """Control generation: flip until cost >= (1 + gamma) * reference cost."""

    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


def control_configuration(
    dvf: DVF,
    reference: ElectrodeConfiguration,
    cost: CostParams = CostParams(),
    gamma: float = 1.0,
) -> ElectrodeConfiguration:
    """Greedily degrade the reference configuration into a control.

    Repeatedly applies the single contact flip that most increases the cost
    on the given DVF, stopping once the cost strictly exceeds the reference
    cost and reaches (1 + gamma) times it. Raises when no flip sequence can
    get there (costs strictly increase each step, so the walk terminates).
    """
    n = len(dvf)
    ref_cost = config_cost(dvf, reference, cost)
    threshold = (1.0 + gamma) * ref_cost
    current = reference
    cur_cost = ref_cost
    for _ in range(4 * n):
        if cur_cost > ref_cost and cur_cost >= threshold:
            return replace(current, label="")
        best = None
        best_cost = cur_cost
        for i in range(n):
            flipped = current.active.copy()
            flipped[i] = not flipped[i]
            if flipped.sum() < 2:
                continue
            candidate = ElectrodeConfiguration(n=n, active=flipped)
            c = config_cost(dvf, candidate, cost)
            if c > best_cost:
                best = candidate
                best_cost = c
        if best is None:
            raise ValueError("cannot generate control configuration: cost cannot exceed reference")
        current, cur_cost = best, best_cost
    raise ValueError("cannot generate control configuration: flip limit reached")


@dataclass(frozen=True)
class RatingSet:
    """One blinded comparison: three arms over a shared reference DVF.

    ``arms`` maps the anonymous labels A/B/C to configurations and ``roles``
    maps the same labels to their hidden identity. Only ``blinded_payload``
    output ever leaves the server.
    """

    set_id: str
    specimen_id: int
    study: str
    section: str
    method: str
    ref_dvf: DVF
    arms: dict
    roles: dict

    def __post_init__(self):
        if set(self.arms) != set(ARM_LABELS) or set(self.roles) != set(ARM_LABELS):
            raise ValueError(f"arms and roles must be keyed by {ARM_LABELS}")
        if sorted(self.roles.values()) != sorted(ROLES):
            raise ValueError(f"roles must contain exactly one of each of {ROLES}")

    def label_of(self, role: str) -> str:
        for label, r in self.roles.items():
            if r == role:
                return label
        raise KeyError(role)


def blinded_payload(rating_set: RatingSet) -> dict:
    """Presentation payload for one set; contains no role information."""
    dvf = rating_set.ref_dvf
    return {
        "set_id": rating_set.set_id,
        "n_contacts": len(dvf),
        "dvf": {
            "doi_deg": dvf.doi_deg.tolist(),
            "dtom_mm": dvf.dtom_mm.tolist(),
            "dtobm_mm": dvf.dtobm_mm.tolist(),
            "frequency_hz": dvf.frequency_hz.tolist(),
        },
        "configurations": {
            label: {"active": rating_set.arms[label].active.astype(int).tolist()}
            for label in ARM_LABELS
        },
    }


def make_rating_sets(reports, control: ControlParams = ControlParams(), seed=0):
    """Build one blinded set per automatic configuration across reports.

    The set order and the role-to-label assignment inside every set are
    shuffled with the given seed; the same seed reproduces both orderings
    exactly.
    """
    if isinstance(reports, StudyReport):
        reports = [reports]
    rng = np.random.default_rng(seed)
    sets = []
    seen = set()
    for report in reports:
        for cell in report.cells:
            set_id = f"{report.study}-{cell.section}-{cell.specimen_id:02d}-{cell.method}"
            if set_id in seen:
                raise ValueError(f"duplicate rating set id {set_id!r}")
            seen.add(set_id)
            try:
                ctrl = control_configuration(
                    cell.ref_dvf, cell.ref_config, report.params.cost, control.gamma
                )
            except ValueError as exc:
                raise ValueError(f"{exc} (set {set_id})") from exc
            by_role = {
                "automatic": replace(cell.auto_config, label=""),
                "reference": replace(cell.ref_config, label=""),
                "control": ctrl,
            }
            order = rng.permutation(len(ROLES))
            roles = {ARM_LABELS[k]: ROLES[int(order[k])] for k in range(len(ROLES))}
            sets.append(
                RatingSet(
                    set_id=set_id,
                    specimen_id=cell.specimen_id,
                    study=report.study,
                    section=cell.section,
                    method=cell.method,
                    ref_dvf=cell.ref_dvf,
                    arms={label: by_role[roles[label]] for label in ARM_LABELS},
                    roles=roles,
                )
            )
    order = rng.permutation(len(sets))
    return [sets[int(i)] for i in order]


@dataclass(frozen=True)
class RatingRecord:
    """One rater's response to one set; immutable once appended."""

    set_id: str
    rater: str
    ranks: dict
    acceptable: dict
    timestamp: str = ""

    def __post_init__(self):
        if set(self.ranks) != set(ARM_LABELS) or set(self.acceptable) != set(ARM_LABELS):
            raise ValueError(f"ranks and acceptable must be keyed by {ARM_LABELS}")
        ranks = {k: int(v) for k, v in self.ranks.items()}
        if any(r not in (1, 2, 3) for r in ranks.values()):
            raise ValueError("ranks must be in {1, 2, 3}")
        acceptable = {k: bool(v) for k, v in self.acceptable.items()}
        timestamp = self.timestamp or datetime.now(timezone.utc).isoformat()
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "acceptable", acceptable)
        object.__setattr__(self, "timestamp", timestamp)

    def as_dict(self):
        return {
            "set_id": self.set_id,
            "rater": self.rater,
            "ranks": dict(self.ranks),
            "acceptable": dict(self.acceptable),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d) -> "RatingRecord":
        return cls(
            set_id=d["set_id"],
            rater=d["rater"],
            ranks=d["ranks"],
            acceptable=d["acceptable"],
            timestamp=d.get("timestamp", ""),
        )


def append_rating_record(record: RatingRecord, path) -> None:
    """Append one record as a JSON line and fsync before returning."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.as_dict()) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def load_rating_records(path):
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            records.append(RatingRecord.from_dict(json.loads(line)))
    return records


def rate_category(record: RatingRecord, rating_set: RatingSet) -> str:
    """Category of the automatic arm for one rated set.

    A bitmask match with the reference is a replicate regardless of the
    rating; otherwise the acceptable flag decides not_acceptable first and
    the rank comparison against the reference arm splits the rest.
    """
    auto_label = rating_set.label_of("automatic")
    ref_label = rating_set.label_of("reference")
    auto = rating_set.arms[auto_label]
    ref = rating_set.arms[ref_label]
    if auto.bitmask == ref.bitmask:
        return "replicate"
    if not record.acceptable[auto_label]:
        return "not_acceptable"
    if record.ranks[auto_label] < record.ranks[ref_label]:
        return "better"
    if record.ranks[auto_label] == record.ranks[ref_label]:
        return "equally_good"
    return "acceptable"


def _rate_block(pairs):
    """Category counts and per-role acceptance rates for (record, set) pairs."""
    counts = {c: 0 for c in CATEGORIES}
    accept = {role: 0 for role in ROLES}
    outcomes = []
    for record, rating_set in pairs:
        counts[rate_category(record, rating_set)] += 1
        flags = {}
        for role in ROLES:
            flags[role] = record.acceptable[rating_set.label_of(role)]
            accept[role] += int(flags[role])
        outcomes.append((flags["automatic"], flags["control"]))
    n = len(pairs)
    return {
        "n": n,
        "categories": counts,
        "automatic_acceptance_rate": accept["automatic"] / n,
        "reference_acceptance_rate": accept["reference"] / n,
        "control_acceptance_rate": accept["control"] / n,
        "mcnemar_auto_vs_control_p": mcnemar_midp(outcomes),
    }


def summarize_ratings(records, sets) -> dict:
    """Per-study category counts plus acceptance rates and the bias check."""
    by_id = {s.set_id: s for s in sets}
    pairs = []
    for record in records:
        if record.set_id not in by_id:
            raise ValueError(f"no rating set with id {record.set_id!r}")
        pairs.append((record, by_id[record.set_id]))
    summary = {"total_records": len(pairs), "studies": {}}
    for study in sorted({s.study for _, s in pairs}):
        summary["studies"][study] = _rate_block([p for p in pairs if p[1].study == study])
    if pairs:
        summary["overall"] = _rate_block(pairs)
    return summary


# ---------------------------------------------------------------------------
# serialization (server side; includes roles, so never served raw)


def _set_to_dict(s: RatingSet) -> dict:
    return {
        "set_id": s.set_id,
        "specimen_id": s.specimen_id,
        "study": s.study,
        "section": s.section,
        "method": s.method,
        "ref_dvf": _dvf_to_dict(s.ref_dvf),
        "arms": {label: s.arms[label].as_dict() for label in ARM_LABELS},
        "roles": dict(s.roles),
    }


def _set_from_dict(d) -> RatingSet:
    return RatingSet(
        set_id=d["set_id"],
        specimen_id=int(d["specimen_id"]),
        study=d["study"],
        section=d["section"],
        method=d["method"],
        ref_dvf=_dvf_from_dict(d["ref_dvf"]),
        arms={label: ElectrodeConfiguration.from_dict(cfg) for label, cfg in d["arms"].items()},
        roles=dict(d["roles"]),
    )


def save_rating_sets(sets, path) -> None:
    Path(path).write_text(json.dumps({"sets": [_set_to_dict(s) for s in sets]}))


def load_rating_sets(path):
    data = json.loads(Path(path).read_text())
    return [_set_from_dict(d) for d in data["sets"]]
