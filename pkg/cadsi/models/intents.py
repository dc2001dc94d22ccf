# cadsi/models/intents.py
"""
交互图上的意图解耦表示学习

每个 ID 嵌入切成 k 段，每段对应一个潜在意图。每层先把所有交互边的
意图分数重置为 1/k，然后做 iters 轮 "softmax 归一化 → 度归一化加权聚合 →
分数更新" 的路由，最后经该层的全连接映射 g_t(z) = tanh(z W_t + b_t)
(按段作用) 得到下一层输入。输出为各层结果之和。

所有分段求和走 scipy.sparse 关联矩阵，反向传播也完整经过路由迭代。
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.special import entr, softmax

from cadsi.graph.hin import InteractionMatrix
from cadsi.utils import constants as C
from cadsi.utils.errors import DimensionError, RoutingInvariantError
from cadsi.utils.helpers import incidence_matrix
from cadsi.utils.logger import logger

ROUTING_FLOOR = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class DisentangleConfig:
    k: int = C.DEFAULT_INTENTS_K
    iters: int = C.DEFAULT_ROUTING_ITERS
    layers: int = C.DEFAULT_LAYERS
    dim: int = C.DEFAULT_DIM

    def __post_init__(self):
        if self.k < 1 or self.iters < 1 or self.layers < 1:
            raise DimensionError(f"k, iters and layers must be >= 1 (got {self.k}, {self.iters}, {self.layers}).")
        if self.dim % self.k != 0:
            raise DimensionError(f"dim {self.dim} is not divisible by k={self.k}.")

    @property
    def chunk(self) -> int:
        return self.dim // self.k


# ---------------------------------------------------------------------------
# 分段与分数
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ChunkedEmbedding:
    """k 段等长向量，第 j 段对应第 j 个意图。"""
    chunks: np.ndarray  # (k, d/k)

    @property
    def k(self) -> int:
        return int(self.chunks.shape[0])

    def flatten(self) -> np.ndarray:
        return self.chunks.reshape(-1)


def init_chunks(id_embedding: np.ndarray, cfg: DisentangleConfig) -> ChunkedEmbedding:
    vector = np.asarray(id_embedding, dtype=np.float64)
    if vector.shape != (cfg.dim,):
        raise DimensionError(f"Expected an embedding of length {cfg.dim}, got shape {vector.shape}.")
    return ChunkedEmbedding(vector.reshape(cfg.k, cfg.chunk).copy())


def split_chunks(matrix: np.ndarray, k: int) -> np.ndarray:
    """(n, d) → (n, k, d/k)。"""
    n, d = matrix.shape
    if d % k != 0:
        raise DimensionError(f"Embedding width {d} is not divisible by k={k}.")
    return matrix.reshape(n, k, d // k)


class IntentGraph:
    """二部交互图的边表与 (节点 × 边) 关联矩阵。只读。"""

    def __init__(self, pairs: np.ndarray, n_users: int, n_items: int):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.users = pairs[:, 0]
        self.items = pairs[:, 1]
        self.n_users = n_users
        self.n_items = n_items
        self.user_incidence: sp.csr_matrix = incidence_matrix(self.users, n_users)
        self.item_incidence: sp.csr_matrix = incidence_matrix(self.items, n_items)
        self.isolated_users = np.bincount(self.users, minlength=n_users) == 0
        self.isolated_items = np.bincount(self.items, minlength=n_items) == 0

    @classmethod
    def from_interactions(cls, interactions: InteractionMatrix) -> "IntentGraph":
        return cls(interactions.pairs, interactions.n_users, interactions.n_items)

    @property
    def n_edges(self) -> int:
        return int(self.users.shape[0])

    @staticmethod
    def _segment(incidence: sp.csr_matrix, values: np.ndarray) -> np.ndarray:
        flat = values.reshape(values.shape[0], -1)
        out = np.asarray(incidence @ flat)
        return out.reshape((incidence.shape[0],) + values.shape[1:])

    def to_users(self, edge_values: np.ndarray) -> np.ndarray:
        return self._segment(self.user_incidence, edge_values)

    def to_items(self, edge_values: np.ndarray) -> np.ndarray:
        return self._segment(self.item_incidence, edge_values)


@dataclass
class IntentScoreMatrix:
    """每条观测边一行 k 个原始分数 S_k(u,i)。"""
    edges: np.ndarray  # (E, 2)
    scores: np.ndarray  # (E, k)
    n_users: int
    n_items: int


@dataclass
class NormalizedScores:
    tilde: np.ndarray  # (E, k)
    user_degree: np.ndarray  # (m, k)
    item_degree: np.ndarray  # (n, k)


def init_scores(interactions: InteractionMatrix, cfg: DisentangleConfig) -> IntentScoreMatrix:
    """所有意图贡献相同: S_k(u,i) = 1/k。"""
    edges = np.asarray(interactions.pairs, dtype=np.int64)
    return IntentScoreMatrix(edges, np.full((edges.shape[0], cfg.k), 1.0 / cfg.k),
                             interactions.n_users, interactions.n_items)


def routing_softmax(scores: np.ndarray) -> np.ndarray:
    """逐边 softmax；下溢为 0 的项抬到最小正规数，非有限输入原样传出。"""
    return np.maximum(softmax(scores, axis=1), ROUTING_FLOOR)


def check_routing(tilde: np.ndarray) -> None:
    if tilde.size and (not np.all(tilde > 0) or np.abs(tilde.sum(axis=1) - 1.0).max() > C.ROUTING_TOLERANCE):
        raise RoutingInvariantError("Normalized intent scores are not strictly positive rows summing to 1.")


def normalize_scores(raw: IntentScoreMatrix) -> NormalizedScores:
    """逐边 softmax，并累计 D_k(u) = Σ_i S̃_k(u,i) 与 D_k(i)。"""
    if not np.isfinite(raw.scores).all():
        raise RoutingInvariantError("Raw intent scores must be finite.")
    tilde = routing_softmax(raw.scores)
    check_routing(tilde)
    graph = IntentGraph(raw.edges, raw.n_users, raw.n_items)
    return NormalizedScores(tilde, graph.to_users(tilde), graph.to_items(tilde))


def edge_weights(norm: NormalizedScores, edges: np.ndarray) -> np.ndarray:
    """S̃_k(u,i) / √(D_k(u)·D_k(i))。"""
    return norm.tilde / np.sqrt(norm.user_degree[edges[:, 0]] * norm.item_degree[edges[:, 1]])


def aggregate_chunk(user: int, intent: int, norm: NormalizedScores, item_chunks: np.ndarray,
                    edges: np.ndarray) -> Optional[np.ndarray]:
    """
    单个用户、单个意图的加权聚合 x_j(u)。
    item_chunks 形状 (n, k, d/k)。孤立用户返回 None，由调用方保留原值。
    """
    on_user = np.flatnonzero(edges[:, 0] == user)
    if on_user.size == 0:
        return None
    weights = edge_weights(norm, edges)[on_user, intent]
    return weights @ item_chunks[edges[on_user, 1], intent]


def aggregate(norm: NormalizedScores, graph: IntentGraph, user_chunks: np.ndarray, item_chunks: np.ndarray) -> np.ndarray:
    """所有用户、所有意图的聚合；孤立用户保留 user_chunks。"""
    weights = edge_weights(norm, np.column_stack([graph.users, graph.items]))
    x = graph.to_users(weights[:, :, None] * item_chunks[graph.items])
    x[graph.isolated_users] = user_chunks[graph.isolated_users]
    return x


def update_scores(raw: IntentScoreMatrix, user_chunks: np.ndarray, item_chunks: np.ndarray) -> IntentScoreMatrix:
    """S_k ← S_k + x_k(u)ᵀ tanh(i_k)，对所有观测边同步更新。"""
    users, items = raw.edges[:, 0], raw.edges[:, 1]
    increment = np.einsum("ekc,ekc->ek", user_chunks[users], np.tanh(item_chunks[items]))
    return IntentScoreMatrix(raw.edges, raw.scores + increment, raw.n_users, raw.n_items)


# ---------------------------------------------------------------------------
# 前向与反向
# ---------------------------------------------------------------------------
@dataclass
class RoutingStep:
    tilde: np.ndarray
    user_degree: np.ndarray
    item_degree: np.ndarray
    weights: np.ndarray
    x: np.ndarray


@dataclass
class LayerCache:
    user_in: np.ndarray
    item_in: np.ndarray
    tanh_item_in: np.ndarray
    steps: List[RoutingStep]
    y: np.ndarray
    user_out: np.ndarray
    item_out: np.ndarray
    final_scores: np.ndarray


@dataclass
class IntentForward:
    """forward() 的输出：u^u、i^i (展平为 (·, d)) 及反向所需的缓存。"""
    user_repr: np.ndarray
    item_repr: np.ndarray
    layers: List[LayerCache] = field(repr=False)

    def routing_readout(self) -> np.ndarray:
        """第一层最后一轮更新后的归一化意图分数 (E, k)。"""
        return routing_softmax(self.layers[0].final_scores)


def _layer_forward(graph: IntentGraph, user_in: np.ndarray, item_in: np.ndarray, W: np.ndarray, b: np.ndarray,
                   iters: int) -> LayerCache:
    k = user_in.shape[1]
    users, items = graph.users, graph.items
    scores = np.full((graph.n_edges, k), 1.0 / k)
    tanh_item_in = np.tanh(item_in)
    steps: List[RoutingStep] = []
    for _ in range(iters):
        tilde = routing_softmax(scores)
        check_routing(tilde)
        user_degree = graph.to_users(tilde)
        item_degree = graph.to_items(tilde)
        weights = tilde / np.sqrt(user_degree[users] * item_degree[items])
        x = graph.to_users(weights[:, :, None] * item_in[items])
        x[graph.isolated_users] = user_in[graph.isolated_users]
        steps.append(RoutingStep(tilde, user_degree, item_degree, weights, x))
        scores = scores + np.einsum("ekc,ekc->ek", x[users], tanh_item_in[items])
    last = steps[-1]
    y = graph.to_items(last.weights[:, :, None] * user_in[users])
    y[graph.isolated_items] = item_in[graph.isolated_items]
    return LayerCache(user_in, item_in, tanh_item_in, steps, y,
                      np.tanh(last.x @ W + b), np.tanh(y @ W + b), scores)


def forward(graph: IntentGraph, user_embeddings: np.ndarray, item_embeddings: np.ndarray,
            layer_W: np.ndarray, layer_b: np.ndarray, cfg: DisentangleConfig) -> IntentForward:
    """
    Args:
        user_embeddings, item_embeddings: (m, d) / (n, d) 的 ID 嵌入。
        layer_W: (L, d/k, d/k)；layer_b: (L, d/k)。
    """
    if layer_W.shape != (cfg.layers, cfg.chunk, cfg.chunk) or layer_b.shape != (cfg.layers, cfg.chunk):
        raise DimensionError(f"Layer parameters {layer_W.shape}/{layer_b.shape} do not match {cfg}.")
    user_in = split_chunks(user_embeddings, cfg.k)
    item_in = split_chunks(item_embeddings, cfg.k)
    user_out = np.zeros_like(user_in)
    item_out = np.zeros_like(item_in)
    caches = []
    for layer in range(cfg.layers):
        cache = _layer_forward(graph, user_in, item_in, layer_W[layer], layer_b[layer], cfg.iters)
        caches.append(cache)
        user_out += cache.user_out
        item_out += cache.item_out
        user_in, item_in = cache.user_out, cache.item_out
    if not (np.isfinite(user_out).all() and np.isfinite(item_out).all()):
        raise RoutingInvariantError("Intent representations became non-finite.")
    if graph.isolated_users.any():
        logger.debug(f"{int(graph.isolated_users.sum())} isolated user(s) kept their input chunks.")
    return IntentForward(user_out.reshape(graph.n_users, -1), item_out.reshape(graph.n_items, -1), caches)


def routing_balance(fwd: IntentForward, graph: IntentGraph) -> Tuple[float, np.ndarray]:
    """
    用户级路由平衡项 Σ_u H(p̄_u) − U'·H(p̄)。

    p̄_u 是用户 u 各条边上读出分布的平均，p̄ 是 U' 个非孤立用户的 p̄_u 的平均。
    最小化它让每个用户集中到少数意图上，同时让各意图在用户间的总体占比保持均衡。
    返回 (损失, 对第一层最终分数 S 的梯度)。
    """
    P = fwd.routing_readout()
    active = ~graph.isolated_users
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, np.zeros_like(P)
    degree = np.bincount(graph.users, minlength=graph.n_users).astype(np.float64)
    user_mean = np.ones((graph.n_users, P.shape[1]))
    user_mean[active] = graph.to_users(P)[active] / degree[active, None]
    overall = user_mean[active].mean(axis=0)
    loss = float(entr(user_mean[active]).sum() - n_active * entr(overall).sum())
    d_P = (np.log(overall)[None, :] - np.log(user_mean[graph.users])) / degree[graph.users, None]
    return loss, P * (d_P - (d_P * P).sum(axis=1, keepdims=True))


def _layer_backward(graph: IntentGraph, cache: LayerCache, W: np.ndarray, d_user_out: np.ndarray,
                    d_item_out: np.ndarray, d_final_scores: Optional[np.ndarray] = None
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    users, items = graph.users, graph.items
    chunk = W.shape[0]
    last = cache.steps[-1]
    dz_user = d_user_out * (1.0 - cache.user_out ** 2)
    dz_item = d_item_out * (1.0 - cache.item_out ** 2)
    dW = last.x.reshape(-1, chunk).T @ dz_user.reshape(-1, chunk) + cache.y.reshape(-1, chunk).T @ dz_item.reshape(-1, chunk)
    db = dz_user.reshape(-1, chunk).sum(axis=0) + dz_item.reshape(-1, chunk).sum(axis=0)
    dx_final = dz_user @ W.T
    dy = dz_item @ W.T

    d_user_in = np.zeros_like(cache.user_in)
    d_item_in = np.zeros_like(cache.item_in)
    d_user_in[graph.isolated_users] += dx_final[graph.isolated_users]
    d_item_in[graph.isolated_items] += dy[graph.isolated_items]

    # y = Σ_u w·P(u)
    d_user_in += graph.to_users(last.weights[:, :, None] * dy[items])
    dw_last = np.einsum("ekc,ekc->ek", dy[items], cache.user_in[users])

    sech2 = 1.0 - cache.tanh_item_in ** 2
    d_scores_next = np.zeros_like(last.tilde) if d_final_scores is None else d_final_scores.copy()
    n_steps = len(cache.steps)
    for r in reversed(range(n_steps)):
        step = cache.steps[r]
        dx = dx_final.copy() if r == n_steps - 1 else np.zeros_like(step.x)
        # 分数更新 S^{r+1} = S^r + <x(u), tanh(Q(i))>
        dx += graph.to_users(d_scores_next[:, :, None] * cache.tanh_item_in[items])
        d_item_in += graph.to_items(d_scores_next[:, :, None] * step.x[users] * sech2[items])
        # 聚合 x = Σ_i w·Q(i)
        dw = np.einsum("ekc,ekc->ek", dx[users], cache.item_in[items])
        if r == n_steps - 1:
            dw += dw_last
        d_item_in += graph.to_items(step.weights[:, :, None] * dx[users])
        # w = S̃ / √(D(u)·D(i))
        du = step.user_degree[users]
        di = step.item_degree[items]
        d_tilde = dw / np.sqrt(du * di)
        d_tilde += graph.to_users(-0.5 * dw * step.weights / du)[users]
        d_tilde += graph.to_items(-0.5 * dw * step.weights / di)[items]
        # softmax
        d_scores_next = d_scores_next + step.tilde * (d_tilde - (d_tilde * step.tilde).sum(axis=1, keepdims=True))
    return d_user_in, d_item_in, dW, db


def backward(fwd: IntentForward, graph: IntentGraph, layer_W: np.ndarray, d_user_repr: np.ndarray,
             d_item_repr: np.ndarray, d_final_scores: Optional[np.ndarray] = None
             ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    对 forward() 的精确反向传播，返回 (dU_id, dI_id, dW, db)。
    d_final_scores 是对第一层最终分数 S 的梯度 (例如来自 routing_balance)。
    """
    k = fwd.layers[0].user_in.shape[1]
    d_user_out = split_chunks(d_user_repr, k)
    d_item_out = split_chunks(d_item_repr, k)
    carry_user = np.zeros_like(d_user_out)
    carry_item = np.zeros_like(d_item_out)
    dW = np.zeros_like(layer_W)
    db = np.zeros(layer_W.shape[:2])
    for layer in reversed(range(len(fwd.layers))):
        carry_user, carry_item, dW[layer], db[layer] = _layer_backward(
            graph, fwd.layers[layer], layer_W[layer], d_user_out + carry_user, d_item_out + carry_item,
            d_final_scores if layer == 0 else None
        )
    return carry_user.reshape(graph.n_users, -1), carry_item.reshape(graph.n_items, -1), dW, db
