"""Relational GCN for link-type prediction, with three ways of feeding DSM
scores in: a loss regularizer, a rescaling layer after the first hidden
layer, and per-edge message weights.

Message passing runs over training edges only, in both directions (every
relation r gets an inverse), plus one shared self-loop relation. Edges are
scored with a per-relation diagonal bilinear form and a softmax over the
original relations.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .autograd import Tensor, param, spmm
from .errors import DegenerateSplit, NonFiniteLoss, ShapeMismatch, UnknownNode
from .graphset import TEST, TRAIN, VAL, TypedGraph

BASELINE = "baseline"
REGULARIZATION = "dsm_regularization"
HIDDEN_LAYER = "dsm_hidden_layer"
EDGE_WEIGHTS = "dsm_edge_weights"
VARIANTS = (BASELINE, REGULARIZATION, HIDDEN_LAYER, EDGE_WEIGHTS)


@dataclass(frozen=True)
class VariantConfig:
    variant: str = BASELINE
    reg_lambda: float = 1.0
    # additive tanh(rho_i * h_i) term on square layers
    node_bias: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.5
    hidden_dim: int = 16
    num_layers: int = 2
    seed: int = 0
    features: str = "type"  # "type": one-hot node type, "onehot": identity
    variant: VariantConfig = field(default_factory=VariantConfig)
    # rescale the full gradient to at most this L2 norm before each step
    clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.hidden_dim < 1 or self.num_layers < 1:
            raise ValueError("hidden_dim and num_layers must be >= 1")
        if self.features not in ("type", "onehot"):
            raise ValueError(f"unknown feature mode {self.features!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0")


@dataclass
class ModelParams:
    layers: list[dict]  # {"W0": (d_in, d_out), "Wr": [(d_in, d_out)] per message relation}
    diagonals: np.ndarray  # (n original relations, d_final)
    variant: VariantConfig
    features: str
    type_vocab: tuple[str, ...]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for l, layer in enumerate(self.layers):
            out.append((f"layer{l}.W0", layer["W0"]))
            for r, w in enumerate(layer["Wr"]):
                out.append((f"layer{l}.W{r}", w))
        out.append(("diagonals", self.diagonals))
        return out

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def to_json(self) -> dict:
        def enc(a):
            return {"shape": list(a.shape), "data": a.ravel().tolist()}

        return {
            "variant": asdict(self.variant),
            "features": self.features,
            "type_vocab": list(self.type_vocab),
            "layers": [{"W0": enc(l["W0"]), "Wr": [enc(w) for w in l["Wr"]]} for l in self.layers],
            "diagonals": enc(self.diagonals),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelParams":
        def dec(e):
            return np.array(e["data"], dtype=np.float64).reshape(e["shape"])

        return cls(
            layers=[{"W0": dec(l["W0"]), "Wr": [dec(w) for w in l["Wr"]]} for l in d["layers"]],
            diagonals=dec(d["diagonals"]),
            variant=VariantConfig(**d["variant"]),
            features=d["features"],
            type_vocab=tuple(d["type_vocab"]),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# message-passing structure


@dataclass
class Structure:
    n_nodes: int
    relation_ids: list[int]  # compact original relation index -> graph relation id
    adjacency: list[sp.csr_matrix]  # one normalized matrix per message relation
    node_rho: np.ndarray  # mean rho_agg over incident training edges
    split_edges: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]

    @property
    def n_message_relations(self) -> int:
        return len(self.adjacency)


def build_structure(graph: TypedGraph, variant: VariantConfig) -> Structure:
    originals = graph.original_relations
    compact = {r: c for c, r in enumerate(originals)}
    R0 = len(originals)
    n = graph.n_nodes
    weighted = variant.variant == EDGE_WEIGHTS

    entries: list[list[tuple[int, int, float]]] = [[] for _ in range(2 * R0 + 1)]
    is_self = graph.is_self()
    train = (graph.split == TRAIN) & ~is_self
    for e in np.flatnonzero(train):
        s, r, o = graph.edges[e]
        c = compact[r]
        fwd = 1.0 + graph.rho_forward[e] if weighted else 1.0
        rev = 1.0 + graph.rho_reverse[e] if weighted else 1.0
        entries[c].append((o, s, fwd))
        entries[R0 + c].append((s, o, rev))
    for e in np.flatnonzero(is_self):
        v = graph.edges[e, 0]
        entries[2 * R0].append((v, v, 1.0))

    adjacency = []
    for rel in entries:
        rel.sort()
        if rel:
            rows = np.array([i for i, _, _ in rel], dtype=np.int64)
            cols = np.array([j for _, j, _ in rel], dtype=np.int64)
            w = np.array([x for _, _, x in rel])
            deg = np.bincount(rows, minlength=n)
            vals = w / deg[rows]
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        adjacency.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))

    rho_sum = np.zeros(n)
    rho_cnt = np.zeros(n)
    for e in np.flatnonzero(train):
        s, _, o = graph.edges[e]
        for v in (s, o):
            rho_sum[v] += graph.rho_forward[e]
            rho_cnt[v] += 1
    node_rho = np.divide(rho_sum, rho_cnt, out=np.zeros(n), where=rho_cnt > 0)

    split_edges = {}
    for which in (TRAIN, VAL, TEST):
        idx = np.flatnonzero((graph.split == which) & ~is_self)
        s, r, o = graph.edges[idx].T if len(idx) else (np.zeros(0, np.int64),) * 3
        labels = np.array([compact[x] for x in r], dtype=np.int64)
        split_edges[which] = (s, o, labels, graph.rho_forward[idx])
    return Structure(n, list(originals), adjacency, node_rho, split_edges)


def node_features(graph: TypedGraph, mode: str, type_vocab: Sequence[str]) -> np.ndarray:
    if mode == "onehot":
        return np.eye(graph.n_nodes)
    pos = {t: i for i, t in enumerate(type_vocab)}
    X = np.zeros((graph.n_nodes, len(type_vocab)))
    for v, t in enumerate(graph.node_types):
        if t in pos:
            X[v, pos[t]] = 1.0
    return X


# ---------------------------------------------------------------------------
# forward pieces


def layer_forward(H: Tensor, struct: Structure, W0: Tensor, Wr: Sequence[Tensor],
                  variant: VariantConfig, activation: str = "relu") -> Tensor:
    """One relational convolution: self transform plus degree-normalized,
    optionally DSM-weighted messages per relation. The weighting itself
    lives in the adjacency built by :func:`build_structure`."""
    if H.shape[0] != struct.n_nodes or W0.shape[0] != H.shape[1]:
        raise ShapeMismatch(f"features {H.shape} do not fit W0 {W0.shape} on {struct.n_nodes} nodes")
    if len(Wr) != struct.n_message_relations:
        raise ShapeMismatch(f"{len(Wr)} relation matrices for {struct.n_message_relations} relations")
    out = H @ W0
    for A, W in zip(struct.adjacency, Wr):
        if W.shape != W0.shape:
            raise ShapeMismatch(f"relation matrix {W.shape} differs from W0 {W0.shape}")
        if A.nnz:
            out = out + spmm(A, H @ W)
    if activation == "relu":
        out = out.relu()
    if variant.node_bias and W0.shape[0] == W0.shape[1]:
        out = out + (H * Tensor(struct.node_rho[:, None])).tanh()
    return out


def apply_dsm_hidden(H: Tensor, struct: Structure) -> Tensor:
    """Scale row i by 1 + mean rho_agg of the edges incident on node i."""
    return H * Tensor(1.0 + struct.node_rho[:, None])


def score_relations(h_s, h_o, diagonals) -> np.ndarray:
    """logit_r = sum_d h_s[d] * diag_r[d] * h_o[d]."""
    h_s = np.asarray(h_s, dtype=np.float64)
    h_o = np.asarray(h_o, dtype=np.float64)
    diagonals = np.asarray(diagonals, dtype=np.float64)
    if h_s.shape != h_o.shape or diagonals.shape[-1] != h_s.shape[-1]:
        raise ShapeMismatch(f"cannot score {h_s.shape} x {h_o.shape} with {diagonals.shape}")
    return (h_s * h_o) @ diagonals.T


def _as_tensors(params: ModelParams):
    layers = [(param(l["W0"]), [param(w) for w in l["Wr"]]) for l in params.layers]
    return layers, param(params.diagonals)


def embed(params: ModelParams, graph: TypedGraph, struct: Structure, tensors=None) -> Tensor:
    layers, _ = tensors if tensors is not None else _as_tensors(params)
    H = Tensor(node_features(graph, params.features, params.type_vocab))
    for l, (W0, Wr) in enumerate(layers):
        last = l == len(layers) - 1
        H = layer_forward(H, struct, W0, Wr, params.variant, "identity" if last else "relu")
        if l == 0 and params.variant.variant == HIDDEN_LAYER:
            H = apply_dsm_hidden(H, struct)
    return H


def _logits(H: Tensor, D: Tensor, s, o) -> Tensor:
    return (H.rows(s) * H.rows(o)) @ D.T


def objective(params: ModelParams, graph: TypedGraph, struct: Structure, tensors=None):
    """Build the training loss graph. Returns (loss tensor, H, tensors)."""
    tensors = tensors if tensors is not None else _as_tensors(params)
    H = embed(params, graph, struct, tensors)
    s, o, labels, rho = struct.split_edges[TRAIN]
    if len(labels) == 0:
        raise DegenerateSplit("no training edges")
    logp = _logits(H, tensors[1], s, o).log_softmax().pick(labels)
    loss = -logp.mean()
    v = params.variant
    if v.variant == REGULARIZATION:
        # structurally supported edges are pushed harder toward their label
        miss = Tensor(np.ones((len(labels), 1))) - logp.exp()
        loss = loss + (miss * Tensor(rho[:, None])).mean() * Tensor(v.reg_lambda)
    return loss, H, tensors


def loss(graph: TypedGraph, params: ModelParams, struct: Structure | None = None):
    """(scalar loss, list of gradient arrays aligned with params.arrays())."""
    struct = struct or build_structure(graph, params.variant)
    L, H, tensors = objective(params, graph, struct)
    value = L.data.item()
    if not math.isfinite(value) or not np.all(np.isfinite(H.data)):
        raise NonFiniteLoss(f"loss is {value}")
    L.backward()
    layers, D = tensors
    grads = []
    for W0, Wr in layers:
        grads.append(_grad(W0))
        grads.extend(_grad(w) for w in Wr)
    grads.append(_grad(D))
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteLoss("non-finite gradient")
    return value, grads


def _grad(t: Tensor) -> np.ndarray:
    return t.grad if t.grad is not None else np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# training and prediction


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_params(graph: TypedGraph, config: TrainConfig) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    type_vocab = tuple(sorted(set(graph.node_types)))
    d_in = graph.n_nodes if config.features == "onehot" else len(type_vocab)
    n_msg = 2 * len(graph.original_relations) + 1
    layers = []
    for _ in range(config.num_layers):
        W0 = _xavier(rng, d_in, config.hidden_dim)
        Wr = [_xavier(rng, d_in, config.hidden_dim) for _ in range(n_msg)]
        layers.append({"W0": W0, "Wr": Wr})
        d_in = config.hidden_dim
    R0 = len(graph.original_relations)
    diagonals = _xavier(rng, R0, config.hidden_dim, (R0, config.hidden_dim))
    return ModelParams(layers, diagonals, config.variant, config.features, type_vocab)


def _accuracy(H: np.ndarray, D: np.ndarray, edges) -> float:
    s, o, labels, _ = edges
    if len(labels) == 0:
        return float("nan")
    pred = np.argmax(score_relations(H[s], H[o], D), axis=1)
    return float(np.mean(pred == labels))


def train(graph: TypedGraph, config: TrainConfig):
    """Full-batch gradient descent. Returns (best-validation params,
    history rows of (epoch, loss, train_acc, val_acc))."""
    struct = build_structure(graph, config.variant)
    if len(struct.split_edges[TRAIN][2]) == 0:
        raise DegenerateSplit("no training edges")
    params = init_params(graph, config)
    has_val = len(struct.split_edges[VAL][2]) > 0
    history = []
    best, best_acc = None, -1.0
    for epoch in range(1, config.epochs + 1):
        L, H, tensors = objective(params, graph, struct)
        value = L.data.item()
        if not math.isfinite(value) or not np.all(np.isfinite(H.data)):
            raise NonFiniteLoss(f"epoch {epoch}: loss is {value}")
        train_acc = _accuracy(H.data, params.diagonals, struct.split_edges[TRAIN])
        val_acc = _accuracy(H.data, params.diagonals, struct.split_edges[VAL])
        history.append((epoch, value, train_acc, val_acc))
        score = val_acc if has_val else train_acc
        if score > best_acc:
            best, best_acc = params.copy(), score
        L.backward()
        layers, D = tensors
        grads = []
        for W0, Wr in layers:
            grads.append(_grad(W0))
            grads.extend(_grad(w) for w in Wr)
        grads.append(_grad(D))
        step = config.learning_rate
        if config.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > config.clip_norm:
                step *= config.clip_norm / norm
        for (_, arr), g in zip(params.arrays(), grads):
            arr -= step * g
        for _, arr in params.arrays():
            if not np.all(np.isfinite(arr)):
                raise NonFiniteLoss(f"epoch {epoch}: parameters diverged")
    return best, history


def predict(params: ModelParams, graph: TypedGraph, pairs: Sequence[tuple[str, str]],
            struct: Structure | None = None) -> list[int]:
    """Most likely original relation id (graph numbering) per (subject,
    object) pair; ties go to the smallest id."""
    for s, o in pairs:
        for node in (s, o):
            if not graph.has_node(node):
                raise UnknownNode(f"unknown node {node!r}")
    struct = struct or build_structure(graph, params.variant)
    H = embed(params, graph, struct).data
    if not pairs:
        return []
    s = np.array([graph.node_index(a) for a, _ in pairs])
    o = np.array([graph.node_index(b) for _, b in pairs])
    pred = np.argmax(score_relations(H[s], H[o], params.diagonals), axis=1)
    return [struct.relation_ids[c] for c in pred]


def split_accuracy(params: ModelParams, graph: TypedGraph, which: int = TEST) -> float:
    mask = graph.mask(which)
    if not mask.any():
        return float("nan")
    pairs = [(graph.node_ids[s], graph.node_ids[o]) for s, _, o in graph.edges[mask].tolist()]
    pred = np.array(predict(params, graph, pairs))
    return float(np.mean(pred == graph.edges[mask, 1]))


def write_history(history, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,train_acc,val_acc\n")
        for epoch, value, tr, va in history:
            fh.write(f"{epoch},{value!r},{tr!r},{va!r}\n")
