"""Command-line entry point: one subcommand per pipeline stage plus ``run``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..corpusindex import CorpusIndex, build_index, default_catalog, enrich_units
from ..dsmcore import dsm_for_graph, read_records, write_records
from ..errors import StageError
from ..graphset import TypedGraph, add_self_loops, attach_dsm, load_triples, split_edges
from ..rgcn import VARIANTS, ModelParams, TrainConfig, VariantConfig, train, write_history
from .config import PipelineConfig
from .pipeline import (accuracy_of, accuracy_table, annotate_corpus, read_corpus,
                       read_documents, read_mentions, report_classwise, run_pipeline,
                       stage, predict_test_split, write_documents, write_mentions)
from .synth import SynthSpec, synth_corpus


def _config(args) -> PipelineConfig | None:
    if not args.config:
        return None
    with stage("config"):
        return PipelineConfig.load(args.config)


def _out(args, config: PipelineConfig | None) -> Path:
    out = Path(args.out or (config.output_dir if config else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick(value, config, attr, default=None):
    if value is not None:
        return value
    if config is not None and getattr(config, attr):
        return getattr(config, attr)
    if default is not None:
        return default
    raise ValueError(f"--{attr.replace('_', '-')} is required without a config that sets it")


def _catalog(config):
    return config.catalog() if config else default_catalog()


def cmd_parse(args, config):
    out = _out(args, config)
    with stage("parse"):
        docs = read_corpus(_pick(args.corpus, config, "corpus_dir"))
        write_documents(docs, out / "documents.jsonl")
    print(f"parsed {len(docs)} documents -> {out / 'documents.jsonl'}")


def cmd_annotate(args, config):
    out = _out(args, config)
    with stage("annotate"):
        docs = read_documents(args.documents or out / "documents.jsonl")
        mentions = annotate_corpus(docs, _pick(args.gazetteer, config, "gazetteer"))
        write_mentions(mentions, out / "mentions.jsonl")
    print(f"{len(mentions)} mentions -> {out / 'mentions.jsonl'}")


def cmd_index(args, config):
    out = _out(args, config)
    enrich = config.enrich if config else True
    if args.no_enrich:
        enrich = False
    with stage("index"):
        docs = read_documents(args.documents or out / "documents.jsonl")
        mentions = read_mentions(args.mentions or out / "mentions.jsonl")
        index = build_index(enrich_units(docs) if enrich else docs, mentions, _catalog(config))
        index.save(out / "index.json")
    print(f"{len(index.postings)} postings over {index.n_units} units -> {out / 'index.json'}")


def cmd_dsm(args, config):
    out = _out(args, config)
    with stage("dsm"):
        index = CorpusIndex.load(args.index or out / "index.json")
        graph = load_triples(_pick(args.triples, config, "triples"))
        records = dsm_for_graph(index, index.catalog, graph)
        write_records(records, out / "dsm.jsonl")
    print(f"{len(records)} records -> {out / 'dsm.jsonl'}")


def cmd_build_graph(args, config):
    out = _out(args, config)
    with stage("build-graph"):
        graph = load_triples(_pick(args.triples, config, "triples"))
        records = read_records(args.dsm or out / "dsm.jsonl")
        graph = add_self_loops(attach_dsm(graph, records))
        graph.save(out / "graph.json")
    print(f"{graph.n_nodes} nodes, {graph.n_edges} edges -> {out / 'graph.json'}")


def cmd_split(args, config):
    out = _out(args, config)
    fractions = tuple(args.fractions) if args.fractions else (config.split_fractions if config else (0.8, 0.1, 0.1))
    seed = args.seed if args.seed is not None else (config.split_seed if config else 0)
    with stage("split"):
        graph = TypedGraph.load(args.graph or out / "graph.json")
        graph = split_edges(graph, fractions, seed)
        graph.save(out / "graph.json")
    counts = [int(graph.mask(w).sum()) for w in range(3)]
    print(f"train/val/test = {counts[0]}/{counts[1]}/{counts[2]} -> {out / 'graph.json'}")


def _train_config(args, config) -> TrainConfig:
    base = config.train if config else TrainConfig()
    variant = VariantConfig(args.variant)
    if config:
        for v in config.variants:
            if v.variant == args.variant:
                variant = v
    changes = {"variant": variant}
    for flag, name in (("epochs", "epochs"), ("lr", "learning_rate"), ("hidden_dim", "hidden_dim"),
                       ("seed", "seed")):
        if getattr(args, flag) is not None:
            changes[name] = getattr(args, flag)
    return replace(base, **changes)


def cmd_train(args, config):
    out = _out(args, config)
    with stage(f"train:{args.variant}"):
        graph = TypedGraph.load(args.graph or out / "graph.json")
        params, history = train(graph, _train_config(args, config))
        params.save(out / f"checkpoint_{args.variant}.json")
        write_history(history, out / f"history_{args.variant}.csv")
    print(f"best val accuracy {max(h[3] for h in history):.4f} -> {out / f'checkpoint_{args.variant}.json'}")


def cmd_eval(args, config):
    out = _out(args, config)
    name = args.dataset or (config.dataset_name if config else "dataset")
    with stage("eval"):
        graph = TypedGraph.load(args.graph or out / "graph.json")
        checkpoints = args.checkpoints or [str(p) for p in sorted(out.glob("checkpoint_*.json"))]
        if not checkpoints:
            raise FileNotFoundError(f"no checkpoints given or found in {str(out)!r}")
        predictions = {}
        for path in checkpoints:
            params = ModelParams.load(path)
            predictions[params.variant.variant] = predict_test_split(params, graph)
        order = [v for v in VARIANTS if v in predictions]
        predictions = {v: predictions[v] for v in order}
        table = {name: {v: accuracy_of(p, graph) for v, p in predictions.items()}}
        (out / "accuracy.csv").write_text(accuracy_table(table, order), encoding="utf-8")
        (out / "classwise.csv").write_text(report_classwise(predictions, graph), encoding="utf-8")
    for v in order:
        print(f"{v:20s} {table[name][v]:.4f}")


def cmd_synth(args, config):
    spec = config.synth if config and config.synth else SynthSpec()
    changes = {k: v for k, v in (("seed", args.seed), ("n_entities", args.entities),
                                 ("n_relation_types", args.relations),
                                 ("edges_per_relation", args.edges), ("p_struct", args.p_struct),
                                 ("noise_ratio", args.noise_ratio)) if v is not None}
    out = Path(args.out or "synth")
    with stage("synth"):
        spec = replace(spec, **changes)
        paths = synth_corpus(spec, out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=1))


def cmd_run(args, config):
    if config is None:
        raise StageError("config", ValueError("run needs --config"))
    if args.out:
        config = replace(config, output_dir=args.out)
    if args.seed is not None:
        config = replace(config, split_seed=args.seed, train=replace(config.train, seed=args.seed))
    report = run_pipeline(config)
    for row in report["variants"]:
        print(f"{row['variant']:20s} {row['test_accuracy']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="PipelineConfig JSON file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed override")

    parser = argparse.ArgumentParser(prog="dsmrel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", parents=[common], help="parse a corpus directory")
    p.add_argument("--corpus")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("annotate", parents=[common], help="find gazetteer mentions")
    p.add_argument("--documents")
    p.add_argument("--gazetteer")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("index", parents=[common], help="build the structural index")
    p.add_argument("--documents")
    p.add_argument("--mentions")
    p.add_argument("--no-enrich", action="store_true", help="do not index heading context")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("dsm", parents=[common], help="score every triple pair")
    p.add_argument("--index")
    p.add_argument("--triples")
    p.set_defaults(func=cmd_dsm)

    p = sub.add_parser("build-graph", parents=[common], help="typed graph with DSM attached")
    p.add_argument("--triples")
    p.add_argument("--dsm")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("split", parents=[common], help="stratified train/val/test split")
    p.add_argument("--graph")
    p.add_argument("--fractions", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train one variant")
    p.add_argument("--graph")
    p.add_argument("--variant", choices=VARIANTS, default=VARIANTS[0])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden-dim", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="accuracy and class-wise reports")
    p.add_argument("--graph")
    p.add_argument("--checkpoints", nargs="+")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--entities", type=int)
    p.add_argument("--relations", type=int)
    p.add_argument("--edges", type=int, help="gold edges per relation")
    p.add_argument("--p-struct", type=float)
    p.add_argument("--noise-ratio", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="full pipeline from a config")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        with stage(args.command):
            args.func(args, config)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
