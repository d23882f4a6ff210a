import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsmrel.autograd import Tensor
from dsmrel.errors import DegenerateSplit, NonFiniteLoss, ShapeMismatch, UnknownNode
from dsmrel.graphset import TEST, TRAIN, VAL, TypedGraph, add_self_loops, graph_from_triples, split_edges
from dsmrel.rgcn import (BASELINE, EDGE_WEIGHTS, HIDDEN_LAYER, REGULARIZATION, VARIANTS, ModelParams,
                         TrainConfig, VariantConfig, apply_dsm_hidden, build_structure, embed,
                         init_params, layer_forward, loss, predict, score_relations, split_accuracy,
                         train, write_history)

from graphs import numeric_grads, random_graph, relative_error


def two_node_graph(rho_forward=0.0, rho_reverse=0.0):
    return TypedGraph(("j", "i"), ("P", "P"), ("r",), np.array([[0, 0, 1]]), np.array([TRAIN]),
                      None, np.array([rho_forward]), np.array([rho_reverse]))


def identity_layer(struct, d):
    return Tensor(np.eye(d)), [Tensor(np.eye(d)) for _ in range(struct.n_message_relations)]


# -- layer_forward ----------------------------------------------------------


def test_single_node_identity():
    g = TypedGraph(("a",), ("P",))
    struct = build_structure(g, VariantConfig())
    H = Tensor(np.array([[1.5, -2.0, 0.25]]))
    W0, Wr = identity_layer(struct, 3)
    out = layer_forward(H, struct, W0, Wr, VariantConfig(), "identity")
    assert np.array_equal(out.data, H.data)


def test_single_message_baseline():
    g = two_node_graph()
    struct = build_structure(g, VariantConfig())
    H = Tensor(np.array([[1.0, 2.0], [10.0, 20.0]]))
    W0, Wr = identity_layer(struct, 2)
    out = layer_forward(H, struct, W0, Wr, VariantConfig(), "identity").data
    assert out[1].tolist() == [11.0, 22.0]  # h_i + h_j
    assert out[0].tolist() == [11.0, 22.0]  # inverse relation carries h_i to j


def test_single_message_edge_weight():
    g = two_node_graph(rho_forward=1.0, rho_reverse=0.5)
    v = VariantConfig(EDGE_WEIGHTS)
    struct = build_structure(g, v)
    H = Tensor(np.array([[1.0, 2.0], [10.0, 20.0]]))
    W0, Wr = identity_layer(struct, 2)
    out = layer_forward(H, struct, W0, Wr, v, "identity").data
    assert out[1].tolist() == [12.0, 24.0]  # h_i + 2 h_j
    assert out[0].tolist() == [16.0, 32.0]  # h_j + 1.5 h_i


@given(st.floats(0.0, 10.0))
def test_message_norm_scales_by_one_plus_rho(rho):
    g = two_node_graph(rho_forward=rho)
    v = VariantConfig(EDGE_WEIGHTS)
    struct = build_structure(g, v)
    H = Tensor(np.array([[3.0, -4.0], [0.0, 0.0]]))
    W0, Wr = identity_layer(struct, 2)
    W0 = Tensor(np.zeros((2, 2)))
    msg = layer_forward(H, struct, W0, Wr, v, "identity").data[1]
    assert np.linalg.norm(msg) == pytest.approx((1.0 + rho) * 5.0, rel=1e-14)


def test_shape_mismatch():
    g = two_node_graph()
    struct = build_structure(g, VariantConfig())
    W0, Wr = identity_layer(struct, 2)
    with pytest.raises(ShapeMismatch):
        layer_forward(Tensor(np.ones((2, 3))), struct, W0, Wr, VariantConfig())
    with pytest.raises(ShapeMismatch):
        layer_forward(Tensor(np.ones((2, 2))), struct, W0, Wr[:-1], VariantConfig())
    with pytest.raises(ShapeMismatch):
        score_relations([1.0, 2.0], [1.0], [[1.0, 1.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_layer_invariant_under_edge_permutation(seed, rnd):
    g = random_graph(seed)
    order = list(range(g.n_edges))
    rnd.shuffle(order)
    h = TypedGraph(g.node_ids, g.node_types, g.relations, g.edges[order], g.split[order],
                   g.self_relation, g.rho_forward[order], g.rho_reverse[order])
    cfg = TrainConfig(hidden_dim=4, seed=seed, variant=VariantConfig(EDGE_WEIGHTS))
    params = init_params(g, cfg)
    a = embed(params, g, build_structure(g, cfg.variant)).data
    b = embed(params, h, build_structure(h, cfg.variant)).data
    assert np.allclose(a, b, rtol=0, atol=1e-13)


# -- hidden-layer scaling and decoder ------------------------------------------


def test_apply_dsm_hidden_mean_rule():
    g = TypedGraph(("a", "b", "c", "d"), ("P",) * 4, ("r",), np.array([[0, 0, 1], [2, 0, 0]]),
                   np.array([TRAIN, TRAIN]), None, np.array([0.5, 1.5]), np.zeros(2))
    g = add_self_loops(g)
    struct = build_structure(g, VariantConfig(HIDDEN_LAYER))
    H = Tensor(np.ones((4, 2)))
    out = apply_dsm_hidden(H, struct).data
    assert out[0].tolist() == [2.0, 2.0]
    assert out[3].tolist() == [1.0, 1.0]  # isolated


def test_apply_dsm_hidden_zero_is_identity():
    g = random_graph(3, zero_dsm=True)
    struct = build_structure(g, VariantConfig(HIDDEN_LAYER))
    H = Tensor(np.random.default_rng(0).normal(size=(g.n_nodes, 3)))
    assert np.array_equal(apply_dsm_hidden(H, struct).data, H.data)


def test_score_relations_examples():
    assert score_relations(np.zeros(3), np.zeros(3), np.ones((4, 3))).tolist() == [0.0] * 4
    assert score_relations([1.0, 1.0], [1.0, 1.0], [[2.0, -1.0]]).tolist() == [1.0]
    rng = np.random.default_rng(0)
    hs, ho, D = rng.normal(size=3), rng.normal(size=3), rng.normal(size=(5, 3))
    perm = rng.permutation(5)
    assert np.array_equal(score_relations(hs, ho, D[perm]), score_relations(hs, ho, D)[perm])


# -- loss -------------------------------------------------------------------


def zeroed(params):
    p = params.copy()
    p.diagonals[:] = 0.0
    return p


@pytest.mark.parametrize("R", [1, 2, 5])
def test_uniform_loss_is_log_r(R):
    rows = [("a", f"r{r}", "b", "P", "P") for r in range(R)]
    g = graph_from_triples(rows[:1] + [(f"x{r}", f"r{r}", f"y{r}", "P", "P") for r in range(1, R)])
    params = zeroed(init_params(g, TrainConfig(hidden_dim=3)))
    value, _ = loss(g, params)
    assert value == pytest.approx(math.log(R), abs=1e-15)


def test_zero_lambda_matches_baseline_bitwise():
    g = random_graph(11)
    base = init_params(g, TrainConfig(hidden_dim=4, seed=2))
    reg = base.copy()
    reg.variant = VariantConfig(REGULARIZATION, reg_lambda=0.0)
    vb, gb = loss(g, base)
    vr, gr = loss(g, reg)
    assert vb == vr
    assert all(np.array_equal(a, b) for a, b in zip(gb, gr))


@pytest.mark.parametrize("variant", [EDGE_WEIGHTS, HIDDEN_LAYER])
def test_zero_dsm_forward_equals_baseline(variant):
    for seed in range(5):
        g = random_graph(seed, zero_dsm=True)
        base = init_params(g, TrainConfig(hidden_dim=4, seed=seed))
        other = base.copy()
        other.variant = VariantConfig(variant)
        a = embed(base, g, build_structure(g, base.variant)).data
        b = embed(other, g, build_structure(g, other.variant)).data
        assert np.array_equal(a, b)


def test_loss_nonnegative():
    for seed in range(10):
        g = random_graph(seed)
        for v in VARIANTS:
            params = init_params(g, TrainConfig(hidden_dim=4, seed=seed, variant=VariantConfig(v)))
            assert loss(g, params)[0] >= 0.0


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("features", ["type", "onehot"])
def test_gradients_match_finite_differences(variant, features):
    for seed in range(3):
        g = random_graph(100 + seed)
        cfg = TrainConfig(hidden_dim=4, seed=seed, features=features,
                          variant=VariantConfig(variant, reg_lambda=0.7))
        params = init_params(g, cfg)
        _, analytic = loss(g, params)
        for (name, _), a, n in zip(params.arrays(), analytic, numeric_grads(g, params)):
            assert relative_error(a, n) < 1e-4, name


def test_node_bias_gradients():
    g = random_graph(7)
    cfg = TrainConfig(hidden_dim=4, seed=1, variant=VariantConfig(EDGE_WEIGHTS, node_bias=True))
    params = init_params(g, cfg)
    _, analytic = loss(g, params)
    for a, n in zip(analytic, numeric_grads(g, params)):
        assert relative_error(a, n) < 1e-4


def test_node_bias_changes_square_layers_only():
    g = random_graph(7)
    cfg = TrainConfig(hidden_dim=4, seed=1, variant=VariantConfig(EDGE_WEIGHTS))
    plain = init_params(g, cfg)
    biased = plain.copy()
    biased.variant = VariantConfig(EDGE_WEIGHTS, node_bias=True)
    a = embed(plain, g, build_structure(g, plain.variant)).data
    b = embed(biased, g, build_structure(g, biased.variant)).data
    assert not np.array_equal(a, b)


# -- training and prediction ---------------------------------------------------


def typed_toy(seed=0):
    """Relation is fully determined by the object's node type."""
    rng = np.random.default_rng(seed)
    people = [f"p{i}" for i in range(12)]
    orgs = [f"o{i}" for i in range(6)]
    rows = set()
    while len(rows) < 40:
        s = people[int(rng.integers(len(people)))]
        if rng.random() < 0.5:
            o = people[int(rng.integers(len(people)))]
            if o != s:
                rows.add((s, "knows", o, "Person", "Person"))
        else:
            rows.add((s, "works_at", orgs[int(rng.integers(len(orgs)))], "Person", "Org"))
    return split_edges(add_self_loops(graph_from_triples(sorted(rows))), seed=seed)


def test_separable_toy_reaches_full_train_accuracy():
    g = typed_toy()
    _, history = train(g, TrainConfig(epochs=200, hidden_dim=8))
    assert any(tr == 1.0 for _, _, tr, _ in history)


def test_training_deterministic_and_one_epoch():
    g = typed_toy(1)
    cfg = TrainConfig(epochs=20, hidden_dim=4, seed=3, variant=VariantConfig(EDGE_WEIGHTS))
    a, ha = train(g, cfg)
    b, hb = train(g, cfg)
    assert ha == hb
    assert a.to_json() == b.to_json()
    _, h1 = train(g, TrainConfig(epochs=1))
    assert len(h1) == 1 and h1[0][0] == 1


def test_best_validation_params_returned():
    g = typed_toy(2)
    best, history = train(g, TrainConfig(epochs=30, hidden_dim=4))
    assert split_accuracy(best, g, VAL) == max(h[3] for h in history)


def test_no_training_edges():
    g = graph_from_triples([("a", "r", "b", "P", "P")])
    g = TypedGraph(g.node_ids, g.node_types, g.relations, g.edges, np.array([TEST]))
    with pytest.raises(DegenerateSplit):
        train(g, TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflow_raises():
    g = typed_toy()
    params = init_params(g, TrainConfig())
    for _, arr in params.arrays():
        arr[:] = 1e200
    with pytest.raises(NonFiniteLoss):
        loss(g, params)


def test_predict_zero_embeddings_tie_break():
    g = typed_toy()
    params = zeroed(init_params(g, TrainConfig()))
    assert predict(params, g, [("p0", "o1"), ("p1", "p2")]) == [0, 0]
    assert predict(params, g, []) == []
    with pytest.raises(UnknownNode):
        predict(params, g, [("p0", "nobody")])


def test_memorized_training_edges():
    g = typed_toy()
    params, _ = train(g, TrainConfig(epochs=200, hidden_dim=8))
    mask = g.mask(TRAIN)
    pairs = [(g.node_ids[s], g.node_ids[o]) for s, _, o in g.edges[mask].tolist()]
    assert predict(params, g, pairs) == g.edges[mask, 1].tolist()
    pred = np.array(predict(params, g, pairs))
    assert split_accuracy(params, g, TRAIN) == float(np.mean(pred == g.edges[mask, 1]))


def test_params_json_roundtrip(tmp_path):
    g = random_graph(5)
    params = init_params(g, TrainConfig(hidden_dim=3, variant=VariantConfig(REGULARIZATION, 0.3)))
    params.save(tmp_path / "p.json")
    again = ModelParams.load(tmp_path / "p.json")
    assert again.variant == params.variant
    assert all(np.array_equal(a, b) for (_, a), (_, b) in zip(again.arrays(), params.arrays()))


def test_history_csv(tmp_path):
    write_history([(1, 0.5, 1.0, float("nan"))], tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,loss,train_acc,val_acc", "1,0.5,1.0,nan"]


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"learning_rate": 0.0}, {"hidden_dim": 0},
                                    {"features": "random"}, {"clip_norm": 0.0}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_variant_config_validation():
    with pytest.raises(ValueError):
        VariantConfig("other")
    with pytest.raises(ValueError):
        VariantConfig(REGULARIZATION, reg_lambda=-1.0)
    assert VariantConfig().variant == BASELINE
