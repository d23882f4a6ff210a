"""Synthetic benchmark: mean test accuracy per variant over several seeds.

    python scripts/run_benchmark.py --seeds 0 1 2 3 4 --out bench
"""
import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from dsmrel.harness.config import PipelineConfig, synthetic_config
from dsmrel.harness.pipeline import benchmark


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="PipelineConfig JSON; defaults to the synthetic config")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--out", default="bench")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    args = parser.parse_args()

    config = PipelineConfig.load(args.config) if args.config else synthetic_config(args.out)
    config = replace(config, output_dir=args.out)
    train = config.train
    if args.epochs is not None:
        train = replace(train, epochs=args.epochs)
    if args.lr is not None:
        train = replace(train, learning_rate=args.lr)
    config = replace(config, train=train)

    start = time.perf_counter()
    results = benchmark(config, args.seeds)
    elapsed = time.perf_counter() - start

    print(f"{'variant':20s} {'mean':>7s} {'std':>7s}  per seed")
    for variant, accs in results.items():
        print(f"{variant:20s} {np.mean(accs):7.4f} {np.std(accs):7.4f}  "
              + " ".join(f"{a:.3f}" for a in accs))
    print(f"{len(args.seeds)} seeds in {elapsed:.1f}s")
    Path(args.out).mkdir(parents=True, exist_ok=True)
    summary = {"seeds": args.seeds, "accuracy": results, "seconds": elapsed, "config": config.to_json()}
    (Path(args.out) / "benchmark.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
