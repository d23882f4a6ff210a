"""Document Structure Measure values.

For a relational feature k the structural probability of (x, y) is the
share of units holding x in the higher-hierarchy role that also hold y in
the lower one. The aggregate weighs each feature by its catalog weight and
by how much of x's overall occurrence happens in that feature's context.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpusindex import CorpusIndex, FeatureCatalog, count, pair_counts
from .docstruct import Mention, Position, SpanKind
from .errors import InvalidCounts


@dataclass(frozen=True)
class DsmRecord:
    x: str
    y: str
    rho_k: tuple[float, ...]
    rho_agg: float

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "rho_k": list(self.rho_k), "rho_agg": self.rho_agg}

    @classmethod
    def from_json(cls, d: dict) -> "DsmRecord":
        return cls(d["x"], d["y"], tuple(float(v) for v in d["rho_k"]), float(d["rho_agg"]))


def zero_record(x: str, y: str, width: int) -> DsmRecord:
    return DsmRecord(x, y, (0.0,) * width, 0.0)


def rho_k(index: CorpusIndex, x: str, y: str, k: int | str) -> float:
    num, den = pair_counts(index, x, y, k)
    if den == 0:
        return 0.0
    return num / den


def importance(n_x: int, n_kx: int) -> float:
    """Share of x's occurrences that sit in the feature's context."""
    if n_x < 0 or n_kx < 0 or n_kx > n_x:
        raise InvalidCounts(f"need 0 <= n_kx <= n_x, got n_x={n_x}, n_kx={n_kx}")
    return n_kx / max(n_x, 1)


def absolute_flag(mentions: Iterable[Mention]) -> float:
    """Fraction of mentions that are bracketed, emphasized or in a footnote."""
    total = marked = 0
    for m in mentions:
        total += 1
        if m.span_kind in (SpanKind.BRACKETED, SpanKind.EMPHASIZED) or m.position is Position.FOOTNOTE:
            marked += 1
    return marked / total if total else 0.0


def absolute_from_index(index: CorpusIndex, x: str) -> float:
    marked, total = index.absolute.get(x, (0, 0))
    return marked / total if total else 0.0


def rho_aggregate(index: CorpusIndex, catalog: FeatureCatalog | None, x: str, y: str) -> DsmRecord:
    catalog = catalog or index.catalog
    n_x, n_kx = count(index, x)
    values = []
    agg = 0.0
    slot = 0
    for entry in catalog.entries:
        if entry.kind == "Absolute":
            v = absolute_from_index(index, y)
            agg += entry.weight * v
        else:
            v = rho_k(index, x, y, entry.k)
            agg += entry.weight * importance(n_x, n_kx[slot]) * v
            slot += 1
        values.append(v)
    return DsmRecord(x, y, tuple(values), agg)


def dsm_for_pairs(index: CorpusIndex, catalog: FeatureCatalog | None,
                  pairs: Iterable[tuple[str, str]]) -> dict[tuple[str, str], DsmRecord]:
    out = {}
    for s, o in pairs:
        for pair in ((s, o), (o, s)):
            if pair not in out:
                out[pair] = rho_aggregate(index, catalog, *pair)
    return out


def dsm_for_graph(index: CorpusIndex, catalog: FeatureCatalog | None, graph) -> dict[tuple[str, str], DsmRecord]:
    """Records for every non-self edge of ``graph`` in both directions."""
    pairs = []
    for s, r, o in graph.edges.tolist():
        if r == graph.self_relation:
            continue
        pairs.append((graph.node_ids[s], graph.node_ids[o]))
    return dsm_for_pairs(index, catalog, pairs)


def write_records(records: Mapping[tuple[str, str], DsmRecord] | Sequence[DsmRecord], path: str | Path) -> None:
    values = records.values() if isinstance(records, Mapping) else records
    with open(path, "w", encoding="utf-8") as fh:
        for rec in sorted(values, key=lambda r: (r.x, r.y)):
            fh.write(json.dumps(rec.to_json()) + "\n")


def read_records(path: str | Path) -> dict[tuple[str, str], DsmRecord]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = DsmRecord.from_json(json.loads(line))
                out[rec.x, rec.y] = rec
    return out
