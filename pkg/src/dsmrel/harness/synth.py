"""Seeded synthetic corpus of templated person pages.

Entities fall into latent groups; relation r links group r to group r+1,
so a node's group (and hence the label of its edges) is only inferable
from the graph. Each gold triple is written into the subject's page either
structurally (infobox row or bullet list, mirrored in the object's
infobox) or as a plain sentence. Context-free co-mention noise adds
mislabeled triples that only ever co-occur in some third page's body.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..docstruct import Gazetteer, save_gazetteers

RELATION_NAMES = ("sibling", "spouse", "father", "mother", "child", "employer",
                  "student", "teacher", "partner", "colleague", "relative", "mentor")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z")
_VOWELS = ("a", "e", "i", "o", "u")
_CODAS = ("", "", "n", "r", "l", "s")

STRUCTURAL = ("infobox", "bullets")


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 2022
    n_entities: int = 200
    n_relation_types: int = 5
    edges_per_relation: int = 40
    p_struct: float = 0.8
    docs_per_entity: int = 1
    # mislabeled co-mention triples, as a fraction of the gold triples
    noise_ratio: float = 0.5

    def __post_init__(self):
        for name in ("n_entities", "n_relation_types", "edges_per_relation", "docs_per_entity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.p_struct <= 1.0:
            raise ValueError("p_struct must be in [0, 1]")
        if self.noise_ratio < 0:
            raise ValueError("noise_ratio must be >= 0")


@dataclass(frozen=True)
class PlannedTriple:
    subject: str
    relation: str
    obj: str
    rendering: str  # infobox | bullets | body | noise
    host: str | None = None  # page carrying a noise co-mention


@dataclass
class CorpusPlan:
    spec: SynthSpec
    entities: list[str]
    names: dict[str, str]
    groups: dict[str, int]
    relations: list[str]
    triples: list[PlannedTriple]

    @property
    def gold(self) -> list[PlannedTriple]:
        return [t for t in self.triples if t.rendering != "noise"]


def _names(rng: np.random.Generator, n: int) -> list[str]:
    def word(n_syl):
        parts = [rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n_syl)]
        return ("".join(parts) + rng.choice(_CODAS)).capitalize()

    out, seen = [], set()
    while len(out) < n:
        name = f"{word(2)} {word(3)}"
        if name.lower() not in seen:
            seen.add(name.lower())
            out.append(name)
    return out


def plan_corpus(spec: SynthSpec) -> CorpusPlan:
    rng = np.random.default_rng(spec.seed)
    R = spec.n_relation_types
    entities = [f"E{i:04d}" for i in range(spec.n_entities)]
    names = dict(zip(entities, _names(rng, spec.n_entities)))
    order = rng.permutation(spec.n_entities)
    groups = {entities[i]: int(rank % R) for rank, i in enumerate(order)}
    members = [[e for e in entities if groups[e] == g] for g in range(R)]
    relations = [RELATION_NAMES[r] if r < len(RELATION_NAMES) else f"relation_{r}" for r in range(R)]

    used: set[frozenset] = set()
    triples: list[PlannedTriple] = []
    for r in range(R):
        subjects, objects = members[r], members[(r + 1) % R]
        candidates = [(s, o) for s in subjects for o in objects if s != o]
        candidates = [candidates[i] for i in rng.permutation(len(candidates))]
        taken = 0
        for s, o in candidates:
            if taken == spec.edges_per_relation:
                break
            key = frozenset((s, o))
            if key in used:
                continue
            used.add(key)
            if rng.random() < spec.p_struct:
                rendering = STRUCTURAL[int(rng.integers(len(STRUCTURAL)))]
            else:
                rendering = "body"
            triples.append(PlannedTriple(s, relations[r], o, rendering))
            taken += 1
        if taken < spec.edges_per_relation:
            raise ValueError(f"relation {relations[r]!r}: only {taken} distinct pairs available")

    n_noise = int(round(spec.noise_ratio * len(triples))) if spec.n_entities >= 3 else 0
    attempts = 0
    while n_noise and attempts < 1000 * len(triples):
        attempts += 1
        s, o, host = (entities[i] for i in rng.choice(spec.n_entities, size=3, replace=False))
        key = frozenset((s, o))
        if key in used:
            continue
        used.add(key)
        triples.append(PlannedTriple(s, relations[int(rng.integers(R))], o, "noise", host))
        n_noise -= 1
    return CorpusPlan(spec, entities, names, groups, relations, triples)


def render_pages(plan: CorpusPlan) -> dict[str, str]:
    """doc id -> markup. Rendering is a pure function of the plan."""
    spec = plan.spec
    names = plan.names
    per = {e: {"infobox": [], "bullets": {}, "body": [], "noise": []} for e in plan.entities}
    for t in plan.triples:
        if t.rendering == "infobox":
            per[t.subject]["infobox"].append((t.relation, names[t.obj]))
        elif t.rendering == "bullets":
            per[t.subject]["bullets"].setdefault(t.relation, []).append(names[t.obj])
        elif t.rendering == "body":
            per[t.subject]["body"].append(f"{names[t.subject]} spent time with {names[t.obj]}.")
        else:
            per[t.host]["noise"].append(
                f"{names[t.subject]} and {names[t.obj]} were both listed in a press report.")
        if t.rendering in STRUCTURAL:
            per[t.obj]["infobox"].append((f"{t.relation} of", names[t.subject]))

    pages = {}
    for e in plan.entities:
        content = per[e]
        k = spec.docs_per_entity
        for d in range(k):
            doc_id = e if k == 1 else f"{e}-{d + 1}"
            lines = [f"# {names[e]}", "", f"{names[e]} is a person in the registry.", ""]
            box = [row for i, row in enumerate(content["infobox"]) if i % k == d]
            if box:
                lines += ["{{infobox"] + [f"{key} = {val}" for key, val in box] + ["}}", ""]
            lists = [item for i, item in enumerate(sorted(content["bullets"].items())) if i % k == d]
            if lists:
                for rel, objs in lists:
                    lines += [f"## {rel.capitalize()}", "", f"{names[e]} has the following {rel} entries:"]
                    lines += [f"- {o}" for o in objs] + [""]
            text = [s for i, s in enumerate(content["body"] + content["noise"]) if i % k == d]
            if text:
                lines += ["## Notes", ""]
                for sentence in text:
                    lines += [sentence, ""]
            pages[doc_id] = "\n".join(lines).rstrip() + "\n"
    return pages


def with_rendering(plan: CorpusPlan, index: int, rendering: str) -> CorpusPlan:
    """Copy of ``plan`` with triple ``index`` rendered differently."""
    triples = list(plan.triples)
    t = triples[index]
    triples[index] = PlannedTriple(t.subject, t.relation, t.obj, rendering, t.host)
    return CorpusPlan(plan.spec, plan.entities, plan.names, plan.groups, plan.relations, triples)


def gazetteer_for(plan: CorpusPlan) -> Gazetteer:
    g = Gazetteer("Person")
    for e in plan.entities:
        g.add(plan.names[e], e)
    return g


def write_corpus(plan: CorpusPlan, out_dir: str | Path) -> dict[str, Path]:
    """Write pages, gazetteer, triples and generation ledger under ``out_dir``."""
    out = Path(out_dir)
    corpus = out / "corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    for doc_id, text in render_pages(plan).items():
        (corpus / f"{doc_id}.md").write_text(text, encoding="utf-8")
    gaz = out / "gazetteer.tsv"
    save_gazetteers([gazetteer_for(plan)], gaz)
    triples = out / "triples.tsv"
    rng = np.random.default_rng(plan.spec.seed + 1)
    order = rng.permutation(len(plan.triples))
    with open(triples, "w", encoding="utf-8") as fh:
        for i in order:
            t = plan.triples[i]
            fh.write(f"{t.subject}\t{t.relation}\t{t.obj}\tPerson\tPerson\n")
    ledger = out / "ledger.jsonl"
    with open(ledger, "w", encoding="utf-8") as fh:
        for t in plan.triples:
            fh.write(json.dumps({"subject": t.subject, "relation": t.relation, "object": t.obj,
                                 "rendering": t.rendering, "structural": t.rendering in STRUCTURAL,
                                 "host": t.host}) + "\n")
    (out / "synth_spec.json").write_text(json.dumps(asdict(plan.spec), indent=1) + "\n", encoding="utf-8")
    return {"corpus_dir": corpus, "gazetteer": gaz, "triples": triples, "ledger": ledger}


def synth_corpus(spec: SynthSpec, out_dir: str | Path) -> dict[str, Path]:
    return write_corpus(plan_corpus(spec), out_dir)
