"""Electrode configuration planning on distance-vs-frequency curves.

A DVF pairs each contact's angular depth with its distance to the modiolar
active region (plus the signed BM distance and place frequency). The
configuration cost penalizes overlapping angular stimulation spreads of
consecutive active contacts and, weighted by lambda, uncovered angular gaps
and chain ends. The cost decomposes over consecutive active pairs, so the
exact minimizer is found by dynamic programming over the last active contact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .phantom import DEFAULT_FREQUENCY_MAP, CochleaAnatomy, FrequencyMapParams
from .phantom import doi_sequence as _doi_sequence
from .phantom import dtobm_sequence, dtom_sequence, place_frequency


@dataclass(frozen=True)
class DVF:
    """Per-contact (DOI, DtoM, DtoBM, place frequency), ordered base to apex."""

    doi_deg: np.ndarray
    dtom_mm: np.ndarray
    dtobm_mm: np.ndarray
    frequency_hz: np.ndarray
    anatomy_provenance: str = "ground_truth"
    localization_provenance: str = "GL"

    def __post_init__(self):
        doi = np.asarray(self.doi_deg, dtype=float).ravel()
        dtom = np.asarray(self.dtom_mm, dtype=float).ravel()
        dtobm = np.asarray(self.dtobm_mm, dtype=float).ravel()
        freq = np.asarray(self.frequency_hz, dtype=float).ravel()
        n = len(doi)
        if not (len(dtom) == len(dtobm) == len(freq) == n) or n < 2:
            raise ValueError("DVF columns must share length >= 2")
        if not (np.diff(doi) > 0).all():
            raise ValueError("localization not ordered")
        if (dtom < 0).any():
            raise ValueError("dtom must be nonnegative")
        for name, arr in (
            ("doi_deg", doi),
            ("dtom_mm", dtom),
            ("dtobm_mm", dtobm),
            ("frequency_hz", freq),
        ):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.doi_deg)


@dataclass(frozen=True)
class ElectrodeConfiguration:
    """Active-contact bitmask over an n-contact array."""

    n: int
    active: np.ndarray
    label: str = ""

    def __post_init__(self):
        active = np.asarray(self.active, dtype=bool).ravel()
        if len(active) != self.n:
            raise ValueError("active mask length must equal n")
        if active.sum() < 2:
            raise ValueError("at least 2 active contacts required")
        active = np.ascontiguousarray(active)
        active.setflags(write=False)
        object.__setattr__(self, "active", active)

    @classmethod
    def from_indices(cls, n: int, indices, label: str = "") -> "ElectrodeConfiguration":
        active = np.zeros(n, dtype=bool)
        active[list(indices)] = True
        return cls(n=n, active=active, label=label)

    @property
    def indices(self) -> tuple:
        return tuple(int(i) for i in np.flatnonzero(self.active))

    @property
    def bitmask(self) -> int:
        return int(sum(1 << i for i in self.indices))

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def as_dict(self):
        return {"n": self.n, "active": list(self.indices), "label": self.label}

    @classmethod
    def from_dict(cls, d) -> "ElectrodeConfiguration":
        return cls.from_indices(int(d["n"]), d["active"], label=d.get("label", ""))


@dataclass(frozen=True)
class CostParams:
    """Cost weights: beta0/beta1 shape the angular spread, lambda the coverage."""

    beta0: float = 10.0
    beta1: float = 25.0
    lam: float = 0.5
    min_active: int = 2

    def __post_init__(self):
        if self.beta0 < 0 or self.beta1 < 0 or self.lam < 0:
            raise ValueError("beta0, beta1 and lam must be nonnegative")
        if self.min_active < 2:
            raise ValueError("min_active must be at least 2")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d) -> "CostParams":
        return cls(**d)


def build_dvf(loc, anatomy: CochleaAnatomy, fmap: FrequencyMapParams = DEFAULT_FREQUENCY_MAP) -> DVF:
    """Measure a localization against an anatomy: one DVF entry per contact."""
    doi = _doi_sequence(loc, anatomy)
    if not (np.diff(doi) > 0).all():
        raise ValueError("localization not ordered")
    return DVF(
        doi_deg=doi,
        dtom_mm=dtom_sequence(loc, anatomy),
        dtobm_mm=dtobm_sequence(loc, anatomy),
        frequency_hz=place_frequency(doi, fmap),
        anatomy_provenance=anatomy.provenance,
        localization_provenance=loc.provenance,
    )


def spreads(dvf: DVF, p: CostParams) -> np.ndarray:
    """Angular stimulation spread per contact: beta0 + beta1 * max(dtom, 0)."""
    return p.beta0 + p.beta1 * np.maximum(dvf.dtom_mm, 0.0)


def _pair_term(s_i: float, s_j: float, delta: float, lam: float) -> float:
    # overlap of the two spreads plus lambda-weighted uncovered gap; kept as
    # one helper so the selector's DP reproduces config_cost bit for bit
    return max(0.0, s_i + s_j - delta) + lam * max(0.0, delta - s_i - s_j)


def config_cost(dvf: DVF, config: ElectrodeConfiguration, p: CostParams = CostParams()) -> float:
    """Cost of a configuration on a DVF (lower = less interaction, more coverage)."""
    if config.n != len(dvf):
        raise ValueError("configuration length does not match DVF")
    act = list(config.indices)
    if len(act) < p.min_active:
        raise ValueError("too few active contacts")
    theta = [float(v) for v in dvf.doi_deg]
    s = [float(v) for v in spreads(dvf, p)]
    total = p.lam * max(0.0, theta[act[0]] - theta[0])
    for a, b in zip(act[:-1], act[1:]):
        total += _pair_term(s[a], s[b], theta[b] - theta[a], p.lam)
    total += p.lam * max(0.0, theta[-1] - theta[act[-1]])
    return total


def select_configuration(dvf: DVF, p: CostParams = CostParams()) -> ElectrodeConfiguration:
    """Exact minimum-cost configuration.

    Dynamic program over (position of the current active contact, number of
    actives still required); values are (cost, -active count) tuples, so ties
    resolve to the larger active count and reconstruction picks the
    lexicographically smallest index set. The recursion reuses the exact float
    expressions of :func:`config_cost`, so the returned configuration's cost
    is bit-identical to evaluating it directly.
    """
    n = len(dvf)
    if n < p.min_active:
        raise ValueError("too few contacts")
    theta = [float(v) for v in dvf.doi_deg]
    s = [float(v) for v in spreads(dvf, p)]

    # best[(j, r)] = best (cost, -count) of an active chain starting at j that
    # must still place r actives (including j) before it may terminate; the
    # end-coverage term is paid on termination; states exist only when r
    # actives still fit
    best = {}
    for j in range(n - 1, -1, -1):
        for r in range(1, min(p.min_active, n - j) + 1):
            value = None
            if r == 1:
                value = (p.lam * max(0.0, theta[-1] - theta[j]), -1)
            rr = max(r - 1, 1)
            for k in range(j + 1, n):
                nxt = best.get((k, rr))
                if nxt is None:
                    continue
                cand = (_pair_term(s[j], s[k], theta[k] - theta[j], p.lam) + nxt[0], nxt[1] - 1)
                if value is None or cand < value:
                    value = cand
            best[(j, r)] = value

    options = [
        (p.lam * max(0.0, theta[j] - theta[0]) + best[(j, p.min_active)][0], best[(j, p.min_active)][1], j)
        for j in range(n - p.min_active + 1)
    ]
    target_cost, target_neg, _ = min(options)
    first = min(j for c, g, j in options if (c, g) == (target_cost, target_neg))

    chain = [first]
    j, r = first, p.min_active
    while True:
        cost_j, neg_j = best[(j, r)]
        if r == 1 and (p.lam * max(0.0, theta[-1] - theta[j]), -1) == (cost_j, neg_j):
            break
        rr = max(r - 1, 1)
        moved = False
        for k in range(j + 1, n):
            nxt = best.get((k, rr))
            if nxt is None:
                continue
            cand = (_pair_term(s[j], s[k], theta[k] - theta[j], p.lam) + nxt[0], nxt[1] - 1)
            if cand == (cost_j, neg_j):
                chain.append(k)
                j, r = k, rr
                moved = True
                break
        assert moved, "selector reconstruction failed"
    return ElectrodeConfiguration.from_indices(n, chain)


def hamming(a: ElectrodeConfiguration, b: ElectrodeConfiguration) -> int:
    """Number of contacts whose active state differs."""
    if a.n != b.n:
        raise ValueError("configuration length mismatch")
    return int(np.count_nonzero(a.active != b.active))


def cost_delta(
    reference_dvf: DVF,
    auto_config: ElectrodeConfiguration,
    ref_config: ElectrodeConfiguration,
    p: CostParams = CostParams(),
) -> float:
    """Extra cost of the automatic configuration on the reference DVF."""
    return config_cost(reference_dvf, auto_config, p) - config_cost(reference_dvf, ref_config, p)


# ---------------------------------------------------------------------------
# serialization


DVF_HEADER = "contact,doi_deg,dtom_mm,dtobm_mm,freq_hz"


def save_dvf_csv(dvf: DVF, path) -> None:
    rows = [DVF_HEADER]
    for i in range(len(dvf)):
        rows.append(
            f"{i},{float(dvf.doi_deg[i])!r},{float(dvf.dtom_mm[i])!r},"
            f"{float(dvf.dtobm_mm[i])!r},{float(dvf.frequency_hz[i])!r}"
        )
    Path(path).write_text("\n".join(rows) + "\n")


def load_dvf_csv(path, anatomy_provenance: str = "ground_truth", localization_provenance: str = "GL") -> DVF:
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != DVF_HEADER:
        raise ValueError("bad DVF header")
    rows = sorted((line.split(",") for line in lines[1:]), key=lambda r: int(r[0]))
    table = np.array([[float(v) for v in r[1:]] for r in rows])
    return DVF(
        doi_deg=table[:, 0],
        dtom_mm=table[:, 1],
        dtobm_mm=table[:, 2],
        frequency_hz=table[:, 3],
        anatomy_provenance=anatomy_provenance,
        localization_provenance=localization_provenance,
    )


def save_configuration_json(config: ElectrodeConfiguration, path) -> None:
    Path(path).write_text(json.dumps(config.as_dict(), indent=1))


def load_configuration_json(path) -> ElectrodeConfiguration:
    return ElectrodeConfiguration.from_dict(json.loads(Path(path).read_text()))
