import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import entropy

from cadsi.graph.hin import InteractionMatrix
from cadsi.models import intents
from cadsi.models.gradcheck import numeric_gradient
from cadsi.models.intents import (DisentangleConfig, IntentGraph, IntentScoreMatrix, aggregate, aggregate_chunk,
                                  init_chunks, init_scores, normalize_scores, update_scores)
from cadsi.utils.errors import DimensionError, RoutingInvariantError

# 3 个用户、4 个物品；用户 2 与物品 3 没有交互
PAIRS = np.array([[0, 0], [0, 1], [1, 1], [1, 2], [0, 2]])


def _interactions() -> InteractionMatrix:
    return InteractionMatrix(("u0", "u1", "u2"), ("m0", "m1", "m2", "m3"), PAIRS)


def graph_edges(graph: IntentGraph) -> np.ndarray:
    return np.column_stack([graph.users, graph.items])


def _layer_params(cfg, rng):
    W = np.eye(cfg.chunk)[None] + 0.2 * rng.standard_normal((cfg.layers, cfg.chunk, cfg.chunk))
    b = 0.1 * rng.standard_normal((cfg.layers, cfg.chunk))
    return W, b


def _reference_layer(interactions, user_in, item_in, W, b, cfg):
    """用单点操作逐个用户、逐个意图地重算一层。"""
    raw = init_scores(interactions, cfg)
    edges = raw.edges
    x = user_in.copy()
    norm = None
    for _ in range(cfg.iters):
        norm = normalize_scores(raw)
        x = user_in.copy()
        for u in range(interactions.n_users):
            for j in range(cfg.k):
                value = aggregate_chunk(u, j, norm, item_in, edges)
                if value is not None:
                    x[u, j] = value
        raw = update_scores(raw, x, item_in)
    weights = intents.edge_weights(norm, edges)
    y = item_in.copy()
    for i in range(interactions.n_items):
        on_item = np.flatnonzero(edges[:, 1] == i)
        if on_item.size:
            for j in range(cfg.k):
                y[i, j] = weights[on_item, j] @ user_in[edges[on_item, 0], j]
    return np.tanh(x @ W + b), np.tanh(y @ W + b)


def test_config_requires_divisible_dim():
    with pytest.raises(DimensionError):
        DisentangleConfig(k=3, dim=8)
    with pytest.raises(DimensionError):
        DisentangleConfig(k=0, dim=8)
    assert DisentangleConfig(k=4, dim=8).chunk == 2


def test_init_chunks_splits_in_order():
    cfg = DisentangleConfig(k=2, dim=4)
    chunks = init_chunks(np.arange(4.0), cfg)
    assert_allclose(chunks.chunks, [[0.0, 1.0], [2.0, 3.0]])
    assert_allclose(chunks.flatten(), np.arange(4.0))
    with pytest.raises(DimensionError):
        init_chunks(np.arange(6.0), cfg)


def test_initial_scores_are_uniform():
    raw = init_scores(_interactions(), DisentangleConfig(k=4, dim=8))
    assert raw.scores.shape == (5, 4)
    assert_allclose(raw.scores, 0.25)
    norm = normalize_scores(raw)
    assert_allclose(norm.tilde, 0.25)
    assert_allclose(norm.user_degree[:, 0], [0.75, 0.5, 0.0])


def test_normalized_scores_rows_sum_to_one():
    rng = np.random.default_rng(0)
    raw = IntentScoreMatrix(PAIRS, 5.0 * rng.standard_normal((5, 3)), 3, 4)
    norm = normalize_scores(raw)
    assert (norm.tilde > 0).all()
    assert_allclose(norm.tilde.sum(axis=1), 1.0, atol=1e-9)


def test_large_score_gaps_keep_rows_positive():
    scores = np.zeros((5, 3))
    scores[:, 0] = 2000.0
    norm = normalize_scores(IntentScoreMatrix(PAIRS, scores, 3, 4))
    assert (norm.tilde > 0).all()
    assert_allclose(norm.tilde.sum(axis=1), 1.0, atol=1e-12)
    assert_allclose(norm.tilde[:, 0], 1.0)


def test_non_finite_scores_rejected():
    raw = IntentScoreMatrix(PAIRS, np.full((5, 2), np.nan), 3, 4)
    with pytest.raises(RoutingInvariantError):
        normalize_scores(raw)


def test_aggregate_matches_per_user_chunks():
    cfg = DisentangleConfig(k=2, dim=6)
    rng = np.random.default_rng(1)
    interactions = _interactions()
    graph = IntentGraph.from_interactions(interactions)
    user_chunks = rng.standard_normal((3, 2, 3))
    item_chunks = rng.standard_normal((4, 2, 3))
    norm = normalize_scores(init_scores(interactions, cfg))
    x = aggregate(norm, graph, user_chunks, item_chunks)
    for u in range(2):
        for j in range(2):
            assert_allclose(x[u, j], aggregate_chunk(u, j, norm, item_chunks, graph_edges(graph)))
    assert aggregate_chunk(2, 0, norm, item_chunks, graph_edges(graph)) is None
    assert_allclose(x[2], user_chunks[2])


def test_forward_matches_single_point_reference():
    cfg = DisentangleConfig(k=2, iters=3, layers=1, dim=6)
    rng = np.random.default_rng(2)
    interactions = _interactions()
    graph = IntentGraph.from_interactions(interactions)
    users, items = rng.standard_normal((3, 6)), rng.standard_normal((4, 6))
    W, b = _layer_params(cfg, rng)
    fwd = intents.forward(graph, users, items, W, b, cfg)
    user_ref, item_ref = _reference_layer(interactions, users.reshape(3, 2, 3), items.reshape(4, 2, 3), W[0], b[0], cfg)
    assert_allclose(fwd.user_repr, user_ref.reshape(3, 6), rtol=1e-10, atol=1e-12)
    assert_allclose(fwd.item_repr, item_ref.reshape(4, 6), rtol=1e-10, atol=1e-12)


def test_multi_layer_output_is_sum_of_layers():
    cfg = DisentangleConfig(k=2, iters=2, layers=2, dim=4)
    rng = np.random.default_rng(3)
    graph = IntentGraph.from_interactions(_interactions())
    users, items = rng.standard_normal((3, 4)), rng.standard_normal((4, 4))
    W, b = _layer_params(cfg, rng)
    fwd = intents.forward(graph, users, items, W, b, cfg)
    total = sum(layer.user_out for layer in fwd.layers)
    assert_allclose(fwd.user_repr, total.reshape(3, 4))
    assert_allclose(fwd.layers[1].user_in, fwd.layers[0].user_out)


def test_routing_readout_is_a_distribution():
    cfg = DisentangleConfig(k=4, iters=2, layers=1, dim=8)
    rng = np.random.default_rng(4)
    graph = IntentGraph.from_interactions(_interactions())
    W, b = _layer_params(cfg, rng)
    readout = intents.forward(graph, rng.standard_normal((3, 8)), rng.standard_normal((4, 8)), W, b, cfg).routing_readout()
    assert readout.shape == (5, 4)
    assert (readout > 0).all()
    assert_allclose(readout.sum(axis=1), 1.0)


def test_forward_rejects_wrong_layer_shapes():
    cfg = DisentangleConfig(k=2, iters=1, layers=2, dim=4)
    graph = IntentGraph.from_interactions(_interactions())
    with pytest.raises(DimensionError):
        intents.forward(graph, np.zeros((3, 4)), np.zeros((4, 4)), np.zeros((1, 2, 2)), np.zeros((1, 2)), cfg)


def test_backward_matches_finite_differences():
    cfg = DisentangleConfig(k=2, iters=2, layers=2, dim=4)
    rng = np.random.default_rng(5)
    graph = IntentGraph.from_interactions(_interactions())
    W, b = _layer_params(cfg, rng)
    params = {"users": rng.standard_normal((3, 4)), "items": rng.standard_normal((4, 4)), "W": W, "b": b}
    probe_u, probe_i = rng.standard_normal((3, 4)), rng.standard_normal((4, 4))

    def loss_fn(current):
        fwd = intents.forward(graph, current["users"], current["items"], current["W"], current["b"], cfg)
        return float((fwd.user_repr * probe_u).sum() + (fwd.item_repr * probe_i).sum())

    fwd = intents.forward(graph, params["users"], params["items"], W, b, cfg)
    d_users, d_items, d_W, d_b = intents.backward(fwd, graph, W, probe_u, probe_i)
    for name, analytic in (("users", d_users), ("items", d_items), ("W", d_W), ("b", d_b)):
        numeric = numeric_gradient(loss_fn, params, name, np.arange(params[name].size))
        assert_allclose(numeric, analytic.ravel(), rtol=1e-5, atol=1e-6)


def test_routing_balance_matches_user_level_entropies():
    cfg = DisentangleConfig(k=3, iters=2, layers=1, dim=6)
    rng = np.random.default_rng(6)
    graph = IntentGraph.from_interactions(_interactions())
    W, b = _layer_params(cfg, rng)
    fwd = intents.forward(graph, rng.standard_normal((3, 6)), rng.standard_normal((4, 6)), W, b, cfg)
    readout = fwd.routing_readout()
    per_user = np.array([readout[graph.users == u].mean(axis=0) for u in (0, 1)])
    overall = per_user.mean(axis=0)
    loss, _ = intents.routing_balance(fwd, graph)
    assert loss == pytest.approx(sum(entropy(p) for p in per_user) - 2 * entropy(overall))
    assert loss <= 0.0


def test_routing_balance_gradient_matches_finite_differences():
    cfg = DisentangleConfig(k=3, iters=2, layers=2, dim=6)
    rng = np.random.default_rng(7)
    graph = IntentGraph.from_interactions(_interactions())
    W, b = _layer_params(cfg, rng)
    params = {"users": rng.standard_normal((3, 6)), "items": rng.standard_normal((4, 6)), "W": W, "b": b}

    def loss_fn(current):
        fwd = intents.forward(graph, current["users"], current["items"], current["W"], current["b"], cfg)
        return intents.routing_balance(fwd, graph)[0]

    fwd = intents.forward(graph, params["users"], params["items"], W, b, cfg)
    _, d_scores = intents.routing_balance(fwd, graph)
    d_users, d_items, d_W, d_b = intents.backward(fwd, graph, W, np.zeros((3, 6)), np.zeros((4, 6)), d_scores)
    assert np.abs(d_users).sum() > 0
    assert_allclose(d_users[2], 0.0)
    for name, analytic in (("users", d_users), ("items", d_items), ("W", d_W), ("b", d_b)):
        numeric = numeric_gradient(loss_fn, params, name, np.arange(params[name].size))
        assert_allclose(numeric, analytic.ravel(), rtol=1e-5, atol=1e-6)
