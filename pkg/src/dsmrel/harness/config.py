"""Pipeline configuration, read from a single JSON document."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..corpusindex import FeatureCatalog, default_catalog
from ..rgcn import VARIANTS, TrainConfig, VariantConfig
from .synth import SynthSpec


@dataclass(frozen=True)
class PipelineConfig:
    corpus_dir: str = ""
    gazetteer: str = ""
    triples: str = ""
    output_dir: str = "out"
    dataset_name: str = "dataset"
    # catalog weights by feature name; unnamed features keep weight 1
    feature_weights: dict = field(default_factory=dict)
    include_absolute: bool = True
    absolute_weight: float = 0.0
    enrich: bool = True
    split_fractions: tuple = (0.8, 0.1, 0.1)
    split_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: tuple = tuple(VariantConfig(v) for v in VARIANTS)
    # when set, ``run`` generates the corpus into output_dir/synth first
    synth: SynthSpec | None = None

    def __post_init__(self):
        if not self.variants:
            raise ValueError("at least one variant must be listed")
        names = [v.variant for v in self.variants]
        if len(set(names)) != len(names):
            raise ValueError(f"variants listed twice: {names}")
        if len(self.split_fractions) != 3:
            raise ValueError("split_fractions needs three numbers")
        if not isinstance(self.split_seed, int) or isinstance(self.split_seed, bool):
            raise ValueError("split_seed must be an explicit integer")
        if self.synth is None and not (self.corpus_dir and self.gazetteer and self.triples):
            raise ValueError("corpus_dir, gazetteer and triples are required without a synth section")

    def catalog(self) -> FeatureCatalog:
        cat = default_catalog(self.absolute_weight, self.include_absolute)
        return cat.with_weights(dict(self.feature_weights))

    def train_config(self, variant: VariantConfig, seed: int | None = None) -> TrainConfig:
        return replace(self.train, variant=variant, seed=self.train.seed if seed is None else seed)

    def missing_paths(self) -> list[str]:
        return [p for p in (self.corpus_dir, self.gazetteer, self.triples) if not Path(p).exists()]

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "train":
                value = {k: v for k, v in asdict(value).items() if k != "variant"}
            elif f.name == "variants":
                value = [asdict(v) for v in value]
            elif f.name == "synth":
                value = None if value is None else asdict(value)
            elif f.name == "split_fractions":
                value = list(value)
            elif f.name == "feature_weights":
                value = dict(sorted(value.items()))
            out[f.name] = value
        return out

    @classmethod
    def from_json(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        if "train" in kw:
            train = dict(kw["train"])
            train.pop("variant", None)
            kw["train"] = TrainConfig(**train)
        if "variants" in kw:
            kw["variants"] = tuple(VariantConfig(v) if isinstance(v, str) else VariantConfig(**v)
                                   for v in kw["variants"])
        if kw.get("synth") is not None:
            kw["synth"] = SynthSpec(**kw["synth"])
        if "split_fractions" in kw:
            kw["split_fractions"] = tuple(float(x) for x in kw["split_fractions"])
        if "feature_weights" in kw:
            kw["feature_weights"] = {k: float(v) for k, v in kw["feature_weights"].items()}
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def synthetic_config(output_dir: str = "out", spec: SynthSpec | None = None, **overrides) -> PipelineConfig:
    """Config that generates the default synthetic corpus and runs all variants."""
    return PipelineConfig(output_dir=output_dir, dataset_name="synthetic",
                          synth=spec or SynthSpec(), **overrides)
