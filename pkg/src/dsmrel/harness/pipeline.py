"""End-to-end pipeline: corpus files in, accuracy reports out.

Every intermediate artifact is written under the output directory, so the
stages can also be run one at a time from the command line.
"""
from __future__ import annotations

import csv
import io
import json
from contextlib import contextmanager
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..corpusindex import CorpusIndex, FeatureCatalog, build_index, enrich_units
from ..docstruct import (Document, Matcher, Mention, annotate, document_from_dict,
                         document_to_dict, load_gazetteers, mention_from_dict,
                         mention_to_dict, parse_document)
from ..dsmcore import DsmRecord, dsm_for_graph, write_records
from ..errors import DsmError, StageError
from ..graphset import (TEST, TypedGraph, add_self_loops, attach_dsm, load_triples,
                        split_edges, stats)
from ..rgcn import ModelParams, predict, train, write_history
from .config import PipelineConfig
from .synth import synth_corpus


@contextmanager
def stage(name: str):
    """Re-raise anything that goes wrong inside as a StageError tagged ``name``."""
    try:
        yield
    except StageError:
        raise
    except (DsmError, ValueError, KeyError, TypeError, OSError) as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# stage helpers


def read_corpus(corpus_dir: str | Path) -> list[Document]:
    """Parse every ``*.md`` file; the file stem is the document id."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {str(root)!r} does not exist")
    files = sorted(root.glob("*.md"))
    if not files:
        raise ValueError(f"no .md documents in {str(root)!r}")
    docs = []
    for path in files:
        try:
            docs.append(parse_document(path.read_text(encoding="utf-8"), path.stem))
        except DsmError as exc:
            raise type(exc)(f"{path.name}: {exc}") from exc
    return docs


def annotate_corpus(docs: Sequence[Document], gazetteer_path: str | Path) -> list[Mention]:
    matcher = Matcher(load_gazetteers(gazetteer_path))
    return [m for doc in docs for m in annotate(doc, matcher)]


def write_jsonl(rows, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_documents(docs: Sequence[Document], path: str | Path) -> None:
    write_jsonl((document_to_dict(d) for d in docs), path)


def read_documents(path: str | Path) -> list[Document]:
    return [document_from_dict(d) for d in read_jsonl(path)]


def write_mentions(mentions: Sequence[Mention], path: str | Path) -> None:
    write_jsonl((mention_to_dict(m) for m in mentions), path)


def read_mentions(path: str | Path) -> list[Mention]:
    return [mention_from_dict(d) for d in read_jsonl(path)]


def graph_with_dsm(triples_path: str | Path, index: CorpusIndex, catalog: FeatureCatalog):
    """Load triples, score every edge in both directions and add self-loops."""
    graph = load_triples(triples_path)
    records = dsm_for_graph(index, catalog, graph)
    return add_self_loops(attach_dsm(graph, records)), records


def predict_test_split(params: ModelParams, graph: TypedGraph) -> list[int]:
    """Predicted relation id for every test edge, in edge order."""
    mask = graph.mask(TEST)
    pairs = [(graph.node_ids[s], graph.node_ids[o]) for s, _, o in graph.edges[mask].tolist()]
    return predict(params, graph, pairs)


def accuracy_of(predictions: Sequence[int], graph: TypedGraph) -> float:
    gold = graph.edges[graph.mask(TEST), 1]
    if len(gold) == 0:
        return float("nan")
    return float(np.mean(np.asarray(predictions) == gold))


def report_classwise(predictions: Mapping[str, Sequence[int]], graph: TypedGraph) -> str:
    """CSV with one row per relation present in the test split:
    ``relation,support,<variant>_acc,...`` in the order of ``predictions``."""
    gold = graph.edges[graph.mask(TEST), 1]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["relation", "support"] + [f"{v}_acc" for v in predictions])
    preds = {v: np.asarray(p, dtype=np.int64) for v, p in predictions.items()}
    for v, p in preds.items():
        if len(p) != len(gold):
            raise ValueError(f"{v}: {len(p)} predictions for {len(gold)} test edges")
    for r in sorted(set(gold.tolist())):
        rows = gold == r
        support = int(rows.sum())
        accs = [repr(float(np.mean(p[rows] == r))) for p in preds.values()]
        writer.writerow([graph.relations[r], support] + accs)
    return out.getvalue()


def accuracy_table(table: Mapping[str, Mapping[str, float]], variants: Sequence[str]) -> str:
    """Rows are datasets, columns are variants."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["dataset"] + list(variants))
    for name, row in table.items():
        writer.writerow([name] + [repr(float(row[v])) for v in variants])
    return out.getvalue()


# ---------------------------------------------------------------------------


@dataclass
class Prepared:
    docs: list[Document]
    mentions: list[Mention]
    index: CorpusIndex
    records: dict[tuple[str, str], DsmRecord]
    graph: TypedGraph  # DSM attached, self-loops added, not yet split


def materialize(config: PipelineConfig) -> PipelineConfig:
    """Generate the synthetic corpus if the config asks for one and point
    the input paths at it."""
    if config.synth is None:
        return config
    with stage("synth"):
        paths = synth_corpus(config.synth, Path(config.output_dir) / "synth")
    return replace(config, corpus_dir=str(paths["corpus_dir"]), gazetteer=str(paths["gazetteer"]),
                   triples=str(paths["triples"]))


def prepare(config: PipelineConfig, out: Path | None = None) -> Prepared:
    """Run parse through graph build; write intermediates under ``out``."""
    with stage("config"):
        missing = config.missing_paths()
        if missing:
            raise FileNotFoundError(f"missing input paths: {missing}")
        catalog = config.catalog()
    with stage("parse"):
        docs = read_corpus(config.corpus_dir)
    with stage("annotate"):
        mentions = annotate_corpus(docs, config.gazetteer)
    with stage("enrich"):
        indexed = enrich_units(docs) if config.enrich else docs
    with stage("index"):
        index = build_index(indexed, mentions, catalog)
    with stage("dsm"):
        graph, records = graph_with_dsm(config.triples, index, catalog)
    if out is not None:
        with stage("write"):
            write_documents(docs, out / "documents.jsonl")
            write_mentions(mentions, out / "mentions.jsonl")
            index.save(out / "index.json")
            write_records(records, out / "dsm.jsonl")
    return Prepared(docs, mentions, index, records, graph)


def run_pipeline(config: PipelineConfig) -> dict:
    """parse, annotate, enrich, index, DSM, graph build, split, train every
    variant, evaluate. Returns the report also written to report.json."""
    out = Path(config.output_dir)
    with stage("config"):
        out.mkdir(parents=True, exist_ok=True)
    given = config
    config = materialize(config)
    prep = prepare(config, out)
    with stage("split"):
        graph = split_edges(prep.graph, config.split_fractions, config.split_seed)
        graph.save(out / "graph.json")
        summary = stats(graph, prep.docs)
        (out / "stats.json").write_text(json.dumps(asdict(summary), indent=1) + "\n", encoding="utf-8")

    predictions: dict[str, list[int]] = {}
    rows = []
    for variant in config.variants:
        name = variant.variant
        with stage(f"train:{name}"):
            params, history = train(graph, config.train_config(variant))
            params.save(out / f"checkpoint_{name}.json")
            write_history(history, out / f"history_{name}.csv")
        with stage(f"eval:{name}"):
            predictions[name] = predict_test_split(params, graph)
            best = max(history, key=lambda h: (h[3], -h[0]))
            rows.append({"variant": name, "test_accuracy": accuracy_of(predictions[name], graph),
                         "best_val_accuracy": best[3], "best_epoch": best[0],
                         "final_loss": history[-1][1]})

    with stage("report"):
        names = [v.variant for v in config.variants]
        table = {config.dataset_name: {r["variant"]: r["test_accuracy"] for r in rows}}
        (out / "accuracy.csv").write_text(accuracy_table(table, names), encoding="utf-8")
        (out / "classwise.csv").write_text(report_classwise(predictions, graph), encoding="utf-8")
        report = {
            "dataset": config.dataset_name,
            "stats": asdict(summary),
            "test_edges": int(graph.mask(TEST).sum()),
            "variants": rows,
            "config": given.to_json(),
        }
        (out / "report.json").write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    return report


def benchmark(config: PipelineConfig, seeds: Sequence[int]) -> dict[str, list[float]]:
    """Test accuracy per variant for each seed. The seed drives both the
    edge split and the parameter initialization; the corpus, index and
    DSM scores are computed once."""
    config = materialize(config)
    prep = prepare(config)
    results: dict[str, list[float]] = {v.variant: [] for v in config.variants}
    for seed in seeds:
        with stage("split"):
            graph = split_edges(prep.graph, config.split_fractions, seed)
        for variant in config.variants:
            with stage(f"train:{variant.variant}"):
                params, _ = train(graph, config.train_config(variant, seed))
            results[variant.variant].append(accuracy_of(predict_test_split(params, graph), graph))
    return results
