# tests/conftest.py
"""
共享测试夹具：一个小型 U/M/A 异构图，以及在它上面搭好的微型模型。
"""
import os

os.environ.setdefault("CADSI_LOG_FILE", "")  # 测试期间不写日志文件

import numpy as np
import pytest

from cadsi.graph.hin import Hin, MetaPath, NodeType, Schema, TypedEdgeKind, aspect_start_paths
from cadsi.graph.walks import WalkConfig, generate_corpus
from cadsi.models.hetsg import FusionParams, SkipGramConfig, fuse_embeddings, train_skipgram
from cadsi.models.intents import DisentangleConfig
from cadsi.models.model import ASPECT_BANK, LAYER_B, LAYER_W, TripleBatch, build_model, initialize_params
from cadsi.models.scoring import PredictorParams

TOY_NODES = [
    ("U", "u0"), ("U", "u1"), ("U", "u2"),
    ("M", "m0"), ("M", "m1"), ("M", "m2"), ("M", "m3"),
    ("A", "a0"), ("A", "a1"),
]
TOY_EDGES = [
    ("u0", "m0", "UM"), ("u0", "m1", "UM"),
    ("u1", "m1", "UM"), ("u1", "m2", "UM"),
    ("u2", "m2", "UM"), ("u2", "m3", "UM"), ("u2", "m0", "UM"),
    ("m0", "a0", "MA"), ("m1", "a0", "MA"), ("m2", "a1", "MA"),  # m3 没有 A 属性
]
TOY_PATHS = [MetaPath(("U", "M", "U")), MetaPath(("M", "U", "M")), MetaPath(("M", "A", "M"))]


def toy_schema() -> Schema:
    return Schema(
        (NodeType("U"), NodeType("M"), NodeType("A")),
        (TypedEdgeKind("UM", "U", "M"), TypedEdgeKind("MA", "M", "A")),
        "U",
        "M",
    )


def build_hin(schema, nodes, edges) -> Hin:
    ids = [node_id for _, node_id in nodes]
    index = {node_id: idx for idx, node_id in enumerate(ids)}
    return Hin(schema, ids, [t for t, _ in nodes], [(index[s], index[d], k) for s, d, k in edges])


@pytest.fixture
def toy_hin() -> Hin:
    return build_hin(toy_schema(), TOY_NODES, TOY_EDGES)


@pytest.fixture
def toy_paths(toy_hin):
    return TOY_PATHS + aspect_start_paths(TOY_PATHS, toy_hin.schema)


@pytest.fixture
def toy_corpus(toy_hin, toy_paths):
    return generate_corpus(toy_hin, toy_paths, WalkConfig(walks_per_node=3, walk_length=7, seed=1))


@pytest.fixture
def micro(toy_hin, toy_corpus):
    """
    d=8、k=2、两层的微型模型。参数换成 N(0, 0.5²) 的随机值，
    保证各参数组的梯度都不接近零，便于做数值梯度校验。
    """
    dim = 8
    emb = train_skipgram(toy_corpus, SkipGramConfig(dim=dim, window=2, negatives=2, epochs=1, seed=1, batch_size=16))
    fusion = FusionParams.near_identity(toy_hin.schema.type_names, dim, seed=1)
    bank = fuse_embeddings(toy_hin, emb, fusion)
    interactions = toy_hin.interaction_matrix()
    cfg = DisentangleConfig(k=2, iters=2, layers=2, dim=dim)
    model = build_model(interactions, emb, bank, cfg, PredictorParams(0.5), freeze_aspects=True)
    params = initialize_params(interactions, emb, fusion, bank, cfg, seed=3)
    rng = np.random.default_rng(42)
    for name in sorted(params):
        if name == LAYER_W:
            params[name] = np.eye(cfg.chunk)[None] + 0.3 * rng.standard_normal(params[name].shape)
        elif name == LAYER_B:
            params[name] = 0.1 * rng.standard_normal(params[name].shape)
        elif name == ASPECT_BANK:
            params[name] = 1.0 + 0.5 * rng.standard_normal(params[name].shape)
        else:
            params[name] = 0.5 * rng.standard_normal(params[name].shape)
    batch = TripleBatch(np.array([0, 1, 2, 2]), np.array([0, 2, 3, 0]), np.array([2, 0, 1, 1]))
    return {
        "model": model,
        "params": params,
        "batch": batch,
        "emb": emb,
        "bank": bank,
        "interactions": interactions,
        "cfg": cfg,
        "corpus": toy_corpus,
    }
