"""Structure-aware inverted index.

Every paragraph unit gets one posting per relational feature: the set A of
entities sitting in the feature's higher-hierarchy role and the set B in
its lower-hierarchy role. Counts are indicator-style: an entity present
several times in one unit still occupies a role once.
"""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .docstruct import Document, Mention, ParagraphUnit, Position, SpanKind, split_units
from .errors import UnknownFeature

RELATIONAL = "Relational"
# feature names the unit splitter knows how to detect
STRUCTURAL_FEATURES = ("bullets", "footnote", "title", "section", "infobox")
ABSOLUTE = "Absolute"

BODY_POSITIONS = (
    Position.PRECEDING_TEXT,
    Position.BULLET_ITEM,
    Position.BODY_TEXT,
    Position.INFOBOX_KEY,
    Position.INFOBOX_VALUE,
    Position.FOOTNOTE,
)


@dataclass(frozen=True)
class FeatureEntry:
    k: int
    name: str
    role_a: tuple[Position, ...]
    role_b: tuple[Position, ...]
    weight: float = 1.0
    kind: str = RELATIONAL


@dataclass(frozen=True)
class FeatureCatalog:
    entries: tuple[FeatureEntry, ...]

    def __post_init__(self):
        ks = [e.k for e in self.entries]
        if ks != list(range(1, len(ks) + 1)):
            raise ValueError(f"feature indexes must be dense from 1, got {ks}")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for e in self.entries:
            if not (e.weight >= 0 and e.weight != float("inf")):
                raise ValueError(f"feature {e.name!r}: weight must be finite and >= 0")
            if e.kind not in (RELATIONAL, ABSOLUTE):
                raise ValueError(f"feature {e.name!r}: unknown kind {e.kind!r}")

    @property
    def relational(self) -> tuple[FeatureEntry, ...]:
        return tuple(e for e in self.entries if e.kind == RELATIONAL)

    @property
    def absolute(self) -> tuple[FeatureEntry, ...]:
        return tuple(e for e in self.entries if e.kind == ABSOLUTE)

    def entry(self, k: int | str) -> FeatureEntry:
        for e in self.entries:
            if e.k == k or e.name == k:
                return e
        raise UnknownFeature(f"no feature {k!r} in catalog")

    def with_weights(self, weights: dict[str, float]) -> "FeatureCatalog":
        unknown = set(weights) - {e.name for e in self.entries}
        if unknown:
            raise UnknownFeature(f"no features named {sorted(unknown)}")
        return FeatureCatalog(tuple(replace(e, weight=float(weights.get(e.name, e.weight)))
                                    for e in self.entries))

    def covered_positions(self) -> set[Position]:
        out: set[Position] = set()
        for e in self.relational:
            out.update(e.role_a)
            out.update(e.role_b)
        return out

    def to_json(self) -> list[dict]:
        return [{"k": e.k, "name": e.name, "role_a": [p.value for p in e.role_a],
                 "role_b": [p.value for p in e.role_b], "weight": e.weight, "kind": e.kind}
                for e in self.entries]

    @classmethod
    def from_json(cls, data: list[dict]) -> "FeatureCatalog":
        entries = []
        for d in data:
            entries.append(FeatureEntry(int(d["k"]), d["name"], _roles(d.get("role_a", [])),
                                        _roles(d.get("role_b", [])), float(d.get("weight", 1.0)),
                                        d.get("kind", RELATIONAL)))
        return cls(tuple(entries))


def _roles(names) -> tuple[Position, ...]:
    if isinstance(names, str):
        names = names.split("|")
    out: list[Position] = []
    for n in names:
        if n == "Body":
            out.extend(BODY_POSITIONS)
        else:
            out.append(Position(n))
    return tuple(dict.fromkeys(out))


def default_catalog(absolute_weight: float = 0.0, include_absolute: bool = True) -> FeatureCatalog:
    P = Position
    entries = [
        FeatureEntry(1, "bullets", (P.PRECEDING_TEXT,), (P.BULLET_ITEM,)),
        FeatureEntry(2, "footnote", (P.BODY_TEXT,), (P.FOOTNOTE,)),
        FeatureEntry(3, "title", (P.TITLE,), BODY_POSITIONS),
        FeatureEntry(4, "section", (P.SECTION_HEADING,), BODY_POSITIONS),
        FeatureEntry(5, "infobox", (P.INFOBOX_KEY, P.TITLE), (P.INFOBOX_VALUE,)),
    ]
    if include_absolute:
        entries.append(FeatureEntry(6, "absolute", (), (), absolute_weight, ABSOLUTE))
    return FeatureCatalog(tuple(entries))


def load_catalog(path: str | Path) -> FeatureCatalog:
    with open(path, encoding="utf-8") as fh:
        return FeatureCatalog.from_json(json.load(fh))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Posting:
    doc: str
    unit: int
    k: int
    A: tuple[str, ...]
    B: tuple[str, ...]


@dataclass
class CorpusIndex:
    catalog: FeatureCatalog
    totals: dict[str, int] = field(default_factory=dict)
    feature_totals: dict[str, list[int]] = field(default_factory=dict)
    postings: list[Posting] = field(default_factory=list)
    # entity -> [marked mentions, all own mentions], inherited ones excluded
    absolute: dict[str, list[int]] = field(default_factory=dict)
    n_units: int = 0

    def __post_init__(self):
        self._a: dict[tuple[str, int], set[tuple[str, int]]] = defaultdict(set)
        self._b: dict[tuple[str, int], set[tuple[str, int]]] = defaultdict(set)
        for p in self.postings:
            key = (p.doc, p.unit)
            for x in p.A:
                self._a[x, p.k].add(key)
            for y in p.B:
                self._b[y, p.k].add(key)

    def a_units(self, x: str, k: int) -> set[tuple[str, int]]:
        return self._a.get((x, k), set())

    def b_units(self, y: str, k: int) -> set[tuple[str, int]]:
        return self._b.get((y, k), set())

    @property
    def entities(self) -> list[str]:
        return sorted(self.totals)

    def to_json(self) -> dict:
        return {
            "catalog": self.catalog.to_json(),
            "n_units": self.n_units,
            "totals": dict(sorted(self.totals.items())),
            "feature_totals": dict(sorted(self.feature_totals.items())),
            "absolute": dict(sorted(self.absolute.items())),
            "units": [{"doc": p.doc, "unit": p.unit, "k": p.k, "A": list(p.A), "B": list(p.B)}
                      for p in self.postings],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CorpusIndex":
        return cls(
            catalog=FeatureCatalog.from_json(data["catalog"]),
            totals={k: int(v) for k, v in data["totals"].items()},
            feature_totals={k: [int(c) for c in v] for k, v in data["feature_totals"].items()},
            postings=[Posting(u["doc"], int(u["unit"]), int(u["k"]), tuple(u["A"]), tuple(u["B"]))
                      for u in data["units"]],
            absolute={k: [int(c) for c in v] for k, v in data.get("absolute", {}).items()},
            n_units=int(data.get("n_units", 0)),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=False)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusIndex":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def enrich_units(docs: Sequence[Document]) -> list[Document]:
    """Mark documents so that every unit also indexes its heading path
    (document title plus enclosing section headings)."""
    return [replace(d, enriched=True) for d in docs]


_ANCHOR_POSITIONS = (Position.PRECEDING_TEXT, Position.BODY_TEXT, Position.BULLET_ITEM)
_MARKED_SPANS = (SpanKind.BRACKETED, SpanKind.EMPHASIZED)


def unit_occupancy(doc: Document, unit: ParagraphUnit,
                   by_unit: dict[int, list[Mention]]) -> list[tuple[Position, str]]:
    """All (position, entity) occurrences visible in ``unit``: its own
    mentions, heading context when the document is enriched, and the
    anchor paragraph's body mentions for a footnote unit."""
    occ = [(m.position, m.entity_id) for m in by_unit.get(unit.unit_index, ())]
    if doc.enriched:
        for cu in unit.context_units:
            for m in by_unit.get(cu, ()):
                if m.position in (Position.TITLE, Position.SECTION_HEADING):
                    occ.append((m.position, m.entity_id))
    if unit.kind == "footnote" and unit.anchor is not None:
        for m in by_unit.get(unit.anchor, ()):
            if m.position in _ANCHOR_POSITIONS:
                occ.append((Position.BODY_TEXT, m.entity_id))
    return occ


def build_index(docs: Sequence[Document], mentions: Iterable[Mention],
                catalog: FeatureCatalog | None = None) -> CorpusIndex:
    catalog = catalog or default_catalog()
    covered = catalog.covered_positions()
    relational = catalog.relational
    for entry in relational:
        if entry.name not in STRUCTURAL_FEATURES:
            raise UnknownFeature(f"feature {entry.name!r} is not one of {STRUCTURAL_FEATURES}")

    by_doc: dict[str, Document] = {}
    for d in docs:
        if d.id in by_doc:
            raise ValueError(f"duplicate document id {d.id!r}")
        by_doc[d.id] = d
    units_of = {d.id: split_units(d) for d in by_doc.values()}

    grouped: dict[str, dict[int, list[Mention]]] = defaultdict(lambda: defaultdict(list))
    absolute: dict[str, list[int]] = {}
    for m in mentions:
        if m.doc_id not in units_of or not 0 <= m.unit_index < len(units_of[m.doc_id]):
            raise ValueError(f"mention references unknown unit {m.doc_id!r}#{m.unit_index}")
        if m.position not in covered:
            raise UnknownFeature(f"position {m.position.value} is not a role of any feature")
        grouped[m.doc_id][m.unit_index].append(m)
        counts = absolute.setdefault(m.entity_id, [0, 0])
        counts[1] += 1
        if m.span_kind in _MARKED_SPANS or m.position is Position.FOOTNOTE:
            counts[0] += 1

    totals: dict[str, int] = defaultdict(int)
    feature_totals: dict[str, list[int]] = {}
    postings: list[Posting] = []
    n_units = 0
    for doc_id in sorted(by_doc):
        doc = by_doc[doc_id]
        by_unit = grouped.get(doc_id, {})
        for unit in units_of[doc_id]:
            n_units += 1
            occ = unit_occupancy(doc, unit, by_unit)
            if not occ:
                continue
            for _, e in occ:
                totals[e] += 1
            for slot, entry in enumerate(relational):
                if entry.name not in unit.features_present:
                    continue
                A = sorted({e for p, e in occ if p in entry.role_a})
                B = sorted({e for p, e in occ if p in entry.role_b})
                if not A:
                    continue
                postings.append(Posting(doc_id, unit.unit_index, entry.k, tuple(A), tuple(B)))
                for x in A:
                    feature_totals.setdefault(x, [0] * len(relational))[slot] += 1
    for e in totals:
        feature_totals.setdefault(e, [0] * len(relational))
    return CorpusIndex(catalog, dict(totals), feature_totals, postings, absolute, n_units)


def count(index: CorpusIndex, x: str) -> tuple[int, tuple[int, ...]]:
    """(overall occurrences of x, per-relational-feature v_a unit counts)."""
    width = len(index.catalog.relational)
    return index.totals.get(x, 0), tuple(index.feature_totals.get(x, [0] * width))


def pair_counts(index: CorpusIndex, x: str, y: str, k: int | str) -> tuple[int, int]:
    """Units with x in A and y in B, and units with x in A, for feature k."""
    k = index.catalog.entry(k).k
    a = index.a_units(x, k)
    if not a:
        return 0, 0
    return len(a & index.b_units(y, k)), len(a)
