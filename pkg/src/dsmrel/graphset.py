"""Typed relation graphs built from triple files."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateSplit, ParseError, TypeConflict

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")
SELF_RELATION = "self_loop"


@dataclass
class TypedGraph:
    node_ids: tuple[str, ...] = ()
    node_types: tuple[str, ...] = ()
    relations: tuple[str, ...] = ()
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    split: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    self_relation: int | None = None
    # rho_agg of (subject, object) and of (object, subject), per edge
    rho_forward: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rho_reverse: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 3)
        n = len(self.edges)
        for name, dtype in (("split", np.int8), ("rho_forward", np.float64), ("rho_reverse", np.float64)):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            if arr.shape != (n,):
                arr = np.zeros(n, dtype=dtype)
            setattr(self, name, arr)
        self._index = {nid: i for i, nid in enumerate(self.node_ids)}

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def original_relations(self) -> list[int]:
        return [r for r in range(len(self.relations)) if r != self.self_relation]

    def node_index(self, node_id: str) -> int:
        return self._index[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index

    def is_self(self) -> np.ndarray:
        if self.self_relation is None:
            return np.zeros(self.n_edges, dtype=bool)
        return self.edges[:, 1] == self.self_relation

    def mask(self, which: int) -> np.ndarray:
        return (self.split == which) & ~self.is_self()

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": n, "type": t} for n, t in zip(self.node_ids, self.node_types)],
            "relations": list(self.relations),
            "self_relation": self.self_relation,
            "edges": self.edges.tolist(),
            "split": self.split.tolist(),
            "rho_forward": self.rho_forward.tolist(),
            "rho_reverse": self.rho_reverse.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "TypedGraph":
        return cls(
            node_ids=tuple(n["id"] for n in data["nodes"]),
            node_types=tuple(n["type"] for n in data["nodes"]),
            relations=tuple(data["relations"]),
            edges=np.array(data["edges"], dtype=np.int64).reshape(-1, 3),
            split=np.array(data["split"], dtype=np.int8),
            self_relation=data.get("self_relation"),
            rho_forward=np.array(data.get("rho_forward", []), dtype=np.float64),
            rho_reverse=np.array(data.get("rho_reverse", []), dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "TypedGraph":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class DatasetStats:
    documents: int
    nodes: int
    node_types: int
    relation_types: int


def graph_from_triples(triples: Sequence[tuple[str, str, str, str, str]],
                       linenos: Sequence[int] | None = None) -> TypedGraph:
    nodes: dict[str, str] = {}
    index: dict[str, int] = {}
    relations: dict[str, int] = {}
    seen: set[tuple[int, int, int]] = set()
    edges = []
    for row, (s, rel, o, st, ot) in enumerate(triples):
        for node, ntype in ((s, st), (o, ot)):
            if nodes.setdefault(node, ntype) != ntype:
                where = f"line {linenos[row]}: " if linenos else ""
                raise TypeConflict(f"{where}entity {node!r} has types {nodes[node]!r} and {ntype!r}")
            index.setdefault(node, len(index))
        e = (index[s], relations.setdefault(rel, len(relations)), index[o])
        if e not in seen:
            seen.add(e)
            edges.append(e)
    return TypedGraph(tuple(nodes), tuple(nodes.values()), tuple(relations),
                      np.array(edges, dtype=np.int64).reshape(-1, 3))


def load_triples(path: str | Path) -> TypedGraph:
    """Read ``subject<TAB>relation<TAB>object<TAB>subject_type<TAB>object_type``.

    Node and relation ids follow first appearance; duplicate triples are
    dropped. ``#`` lines and blank lines are ignored.
    """
    rows, linenos = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) != 5 or not all(parts):
                raise ParseError(f"expected 5 non-empty tab-separated fields, got {len(parts)}", lineno)
            rows.append(tuple(parts))
            linenos.append(lineno)
    return graph_from_triples(rows, linenos)


def save_triples(graph: TypedGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s, r, o in graph.edges.tolist():
            if r == graph.self_relation:
                continue
            fh.write(f"{graph.node_ids[s]}\t{graph.relations[r]}\t{graph.node_ids[o]}\t"
                     f"{graph.node_types[s]}\t{graph.node_types[o]}\n")


def add_self_loops(graph: TypedGraph) -> TypedGraph:
    """Give every zero-degree node a (v, self, v) edge on one shared
    relation type appended to the catalog. Idempotent."""
    relations = graph.relations
    self_rel = graph.self_relation
    if self_rel is None:
        name = SELF_RELATION
        while name in relations:
            name = "_" + name
        relations = relations + (name,)
        self_rel = len(relations) - 1
    degree = np.zeros(graph.n_nodes, dtype=np.int64)
    np.add.at(degree, graph.edges[:, 0], 1)
    np.add.at(degree, graph.edges[:, 2], 1)
    lonely = np.flatnonzero(degree == 0)
    loops = np.stack([lonely, np.full_like(lonely, self_rel), lonely], axis=1)
    return replace(
        graph,
        relations=relations,
        self_relation=self_rel,
        edges=np.concatenate([graph.edges, loops]),
        split=np.concatenate([graph.split, np.full(len(lonely), TRAIN, dtype=np.int8)]),
        rho_forward=np.concatenate([graph.rho_forward, np.zeros(len(lonely))]),
        rho_reverse=np.concatenate([graph.rho_reverse, np.zeros(len(lonely))]),
    )


def split_sizes(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    """Floor the val/test shares, keep at least one of each once a class
    has three edges, and give the remainder to train."""
    _, fv, ft = fractions
    n_val = math.floor(n * fv + 1e-9)
    n_test = math.floor(n * ft + 1e-9)
    if n >= 3:
        n_val, n_test = max(n_val, 1), max(n_test, 1)
    return n - n_val - n_test, n_val, n_test


def split_edges(graph: TypedGraph, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> TypedGraph:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    split = np.full(graph.n_edges, TRAIN, dtype=np.int8)
    is_self = graph.is_self()
    for r in graph.original_relations:
        idx = np.flatnonzero((graph.edges[:, 1] == r) & ~is_self)
        if len(idx) == 0:
            continue
        _, n_val, n_test = split_sizes(len(idx), fractions)
        perm = idx[rng.permutation(len(idx))]
        split[perm[:n_val]] = VAL
        split[perm[n_val:n_val + n_test]] = TEST
    if graph.n_edges - is_self.sum() > 0:
        for which in (TRAIN, VAL, TEST):
            if not np.any((split == which) & ~is_self):
                raise DegenerateSplit(f"{SPLIT_NAMES[which]} split received no edges")
    return replace(graph, split=split)


def attach_dsm(graph: TypedGraph, records: Mapping) -> TypedGraph:
    """Per-edge rho_agg for the (s, o) and (o, s) directions; missing
    pairs and self-loops get zero."""
    fwd = np.zeros(graph.n_edges)
    rev = np.zeros(graph.n_edges)
    for e, (s, r, o) in enumerate(graph.edges.tolist()):
        if r == graph.self_relation:
            continue
        sid, oid = graph.node_ids[s], graph.node_ids[o]
        rec = records.get((sid, oid))
        if rec is not None:
            fwd[e] = rec.rho_agg
        rec = records.get((oid, sid))
        if rec is not None:
            rev[e] = rec.rho_agg
    return replace(graph, rho_forward=fwd, rho_reverse=rev)


def stats(graph: TypedGraph, corpus: Sequence = ()) -> DatasetStats:
    """Counts in the shape of a dataset summary table. The self-loop
    relation is plumbing and is not counted as a relation type."""
    return DatasetStats(
        documents=len(corpus),
        nodes=graph.n_nodes,
        node_types=len(set(graph.node_types)),
        relation_types=len(graph.original_relations),
    )
