"""Compare analytic gradients with central finite differences on random
small graphs for every model variant.

    python scripts/gradcheck.py --graphs 10 --eps 1e-5
"""
import argparse

import numpy as np

from dsmrel.graphset import TEST, TRAIN, VAL, TypedGraph, add_self_loops
from dsmrel.rgcn import VARIANTS, TrainConfig, VariantConfig, build_structure, init_params, loss


def random_graph(rng, max_nodes, n_relations):
    n = int(rng.integers(3, max_nodes + 1))
    pairs = [(s, o) for s in range(n) for o in range(n) if s != o]
    m = int(rng.integers(2, min(len(pairs), 2 * n) + 1))
    chosen = [pairs[i] for i in rng.choice(len(pairs), size=m, replace=False)]
    edges = np.array([(s, int(rng.integers(n_relations)), o) for s, o in chosen])
    split = rng.choice([TRAIN, TRAIN, TRAIN, VAL, TEST], size=m).astype(np.int8)
    split[0] = TRAIN
    g = TypedGraph(tuple(f"v{i}" for i in range(n)), tuple(f"T{int(rng.integers(2))}" for _ in range(n)),
                   tuple(f"r{r}" for r in range(n_relations)), edges, split, None,
                   rng.uniform(0, 2, m), rng.uniform(0, 2, m))
    return add_self_loops(g)


def max_relative_error(graph, params, eps, floor):
    """(worst entrywise relative error, analytic value at that entry)."""
    struct = build_structure(graph, params.variant)
    _, analytic = loss(graph, params, struct)
    worst, at = 0.0, 0.0
    for (_, arr), a in zip(params.arrays(), analytic):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            plus = loss(graph, params, struct)[0]
            flat[i] = keep - eps
            minus = loss(graph, params, struct)[0]
            flat[i] = keep
            num = (plus - minus) / (2 * eps)
            ana = a.reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana) + abs(num), floor)
            if err > worst:
                worst, at = err, ana
    return worst, at


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--graphs", type=int, default=10)
    parser.add_argument("--max-nodes", type=int, default=10)
    parser.add_argument("--relations", type=int, default=3)
    parser.add_argument("--hidden-dim", type=int, default=4)
    parser.add_argument("--eps", type=float, default=1e-5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--floor", type=float, default=1e-8,
                        help="denominator floor; entries far below it are finite-difference noise")
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    graphs = [random_graph(rng, args.max_nodes, args.relations) for _ in range(args.graphs)]
    for variant in VARIANTS:
        errs = []
        for i, g in enumerate(graphs):
            cfg = TrainConfig(hidden_dim=args.hidden_dim, seed=i, variant=VariantConfig(variant, reg_lambda=0.5))
            errs.append(max_relative_error(g, init_params(g, cfg), args.eps, args.floor))
        worst, at = max(errs)
        print(f"{variant:20s} max relative error {worst:.2e} (gradient entry {at:.2e})")


if __name__ == "__main__":
    main()
