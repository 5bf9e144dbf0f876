"""Specimen manifest and dataset group assembly.

Groups follow the availability-and-migration rules of the validation design:
group 1 needs a post-implantation reference without array migration, group 2
needs a pre-implantation reference, group 3 is everything, and group 4 is the
pre-implantation subset without migration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple


@dataclass(frozen=True)
class SpecimenRecord:
    id: int
    pre_ct: bool = True
    post_ct: bool = True
    pre_uct: bool = False
    post_uct: bool = True
    migration: bool = False
    array_model: str = "unknown"

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d) -> "SpecimenRecord":
        return cls(**d)


class Groups(NamedTuple):
    g1: tuple
    g2: tuple
    g3: tuple
    g4: tuple


def assemble_groups(manifest) -> Groups:
    """Partition a manifest by reference availability and migration."""
    manifest = list(manifest)
    if not manifest:
        raise ValueError("manifest is empty")
    g1 = tuple(r for r in manifest if r.post_uct and not r.migration)
    g2 = tuple(r for r in manifest if r.pre_uct)
    g3 = tuple(manifest)
    g4 = tuple(r for r in manifest if r.pre_uct and not r.migration)
    return Groups(g1=g1, g2=g2, g3=g3, g4=g4)


# Bundled full-scale manifest of 35 specimens: all have a post-implantation
# reference; 3, 28, 29, 30 and 35 carry the migration flag; 30-35 also have a
# pre-implantation reference. Group sizes come out as (30, 6, 35, 4), and a
# complete run of the three studies on it produces 255 rating sets.
_MIGRATED = frozenset({3, 28, 29, 30, 35})
_PRE_UCT = frozenset(range(30, 36))


def full_scale_manifest() -> list:
    return [
        SpecimenRecord(
            id=i,
            pre_ct=True,
            post_ct=True,
            pre_uct=i in _PRE_UCT,
            post_uct=True,
            migration=i in _MIGRATED,
            array_model="phantom-12",
        )
        for i in range(1, 36)
    ]


def uniform_manifest(count: int, pre_uct: bool = False) -> list:
    """A plain manifest: every specimen complete, no migration."""
    return [
        SpecimenRecord(id=i, pre_uct=pre_uct, array_model="phantom-12")
        for i in range(1, count + 1)
    ]


def save_manifest(manifest, path) -> None:
    Path(path).write_text(json.dumps([r.as_dict() for r in manifest], indent=1))


def load_manifest(path) -> list:
    return [SpecimenRecord.from_dict(d) for d in json.loads(Path(path).read_text())]
