# cadsi/models/model.py
"""
语义感知的意图融合、打分、BPR 与联合目标函数

参数以 {名字: ndarray} 字典保存，梯度手工推导：
    user_id / item_id            ID 嵌入 u、i
    layer_W / layer_b            意图模块每层的 g_t
    fusion_M_user / fusion_b_user, fusion_M_item / fusion_b_item
    target:<路径> / context:<路径>  skip-gram 嵌入表 (L_θ 的参数，同时是 c_u、c_i 的来源)
    aspect_bank                  每个方面类型的 c_a，默认冻结
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_expit

from cadsi.graph.hin import InteractionMatrix
from cadsi.models import intents
from cadsi.models.hetsg import ContextBank, FusionParams, FusionRows, MetaPathEmbeddings, fusion_rows, skipgram_batch
from cadsi.models.intents import DisentangleConfig, IntentForward, IntentGraph
from cadsi.models.intervention import DebiasResult, inclusion_masks, refine, refine_and_debias, refined_predict
from cadsi.models.scoring import PredictorParams, fm_semantic_intent, predict
from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError, DimensionError, EvaluationError
from cadsi.utils.helpers import scatter_rows, stream_rng

USER_ID = "user_id"
ITEM_ID = "item_id"
LAYER_W = "layer_W"
LAYER_B = "layer_b"
ASPECT_BANK = "aspect_bank"
TARGET_PREFIX = "target:"
CONTEXT_PREFIX = "context:"
SCORE_MODES = ("semantic", "refined")


def fusion_keys(role: str) -> Tuple[str, str]:
    return f"fusion_M_{role}", f"fusion_b_{role}"


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda_d: float = C.DEFAULT_LAMBDA_D
    lambda_theta: float = C.DEFAULT_LAMBDA_THETA
    lambda_z: float = C.DEFAULT_LAMBDA_Z
    l2: float = C.DEFAULT_L2
    lambda_route: float = C.DEFAULT_LAMBDA_ROUTE

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ConfigError(f"objective.{name} must be >= 0, got {value}.")


@dataclass(frozen=True)
class TrainingTriple:
    user: int
    pos: int
    neg: int


@dataclass
class TripleBatch:
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    @classmethod
    def from_triples(cls, triples: Sequence[TrainingTriple]) -> "TripleBatch":
        return cls(np.array([t.user for t in triples], dtype=np.int64),
                   np.array([t.pos for t in triples], dtype=np.int64),
                   np.array([t.neg for t in triples], dtype=np.int64))

    def __len__(self) -> int:
        return int(self.users.shape[0])


# 每条路径一个 (centers, contexts, negatives)
SkipGramBatch = Dict[str, Tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class LossComponents:
    bpr: float = 0.0
    theta: float = 0.0
    debias: float = 0.0
    reg: float = 0.0
    route: float = 0.0
    total: float = 0.0


def regularizer(params: Dict[str, np.ndarray], names: Sequence[str], l2: float) -> float:
    """ℛ(Ω) = l2 · Σ‖θ‖²。"""
    return float(l2 * sum(float(np.sum(params[name] * params[name])) for name in sorted(names)))


def bpr_from_scores(pos_scores: np.ndarray, neg_scores: np.ndarray) -> float:
    """Σ −ln σ(ŷ_ui − ŷ_uj)。"""
    return float(-log_expit(np.asarray(pos_scores) - np.asarray(neg_scores)).sum())


def total_objective(components: LossComponents, cfg: ObjectiveConfig) -> float:
    return (cfg.lambda_d * components.debias + cfg.lambda_theta * components.theta
            + cfg.lambda_z * components.bpr + cfg.lambda_route * components.route + components.reg)


@dataclass
class Representations:
    user_id: np.ndarray
    item_id: np.ndarray
    intents: IntentForward
    c_u: np.ndarray
    c_i: np.ndarray
    tbar_u: np.ndarray
    tbar_i: np.ndarray

    @property
    def user_intent(self) -> np.ndarray:
        return self.intents.user_repr

    @property
    def item_intent(self) -> np.ndarray:
        return self.intents.item_repr


class CadsiModel:
    """
    在固定的训练交互图上计算表示、打分与联合目标函数的梯度。
    参数本身不存放在模型里，由调用方 (训练系统、检查点) 持有。
    """

    def __init__(self, graph: IntentGraph, user_rows: FusionRows, item_rows: FusionRows,
                 table_shapes: Dict[str, Tuple[int, int]], aspect_names: Sequence[str],
                 disentangle: DisentangleConfig, predictor: PredictorParams, freeze_aspects: bool = True):
        self.graph = graph
        self.user_rows = user_rows
        self.item_rows = item_rows
        self.table_shapes = dict(table_shapes)
        self.aspect_names = tuple(aspect_names)
        self.disentangle = disentangle
        self.predictor = predictor
        self.freeze_aspects = freeze_aspects

    # --- 参数 ---
    def trainable_names(self, params: Dict[str, np.ndarray]) -> List[str]:
        return sorted(name for name in params if not (name == ASPECT_BANK and self.freeze_aspects))

    def _targets(self, params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        return {name: params[TARGET_PREFIX + name] for name in self.table_shapes}

    # --- 前向 ---
    def _fuse(self, params: Dict[str, np.ndarray], rows: FusionRows, role: str) -> Tuple[np.ndarray, np.ndarray]:
        M_key, b_key = fusion_keys(role)
        tbar = rows.mean_vectors(self._targets(params), self.disentangle.dim)
        fused = tbar @ params[M_key].T + params[b_key]
        fused[rows.missing] = 0.0
        return fused, tbar

    def representations(self, params: Dict[str, np.ndarray]) -> Representations:
        fwd = intents.forward(self.graph, params[USER_ID], params[ITEM_ID], params[LAYER_W], params[LAYER_B],
                              self.disentangle)
        c_u, tbar_u = self._fuse(params, self.user_rows, "user")
        c_i, tbar_i = self._fuse(params, self.item_rows, "item")
        return Representations(params[USER_ID], params[ITEM_ID], fwd, c_u, c_i, tbar_u, tbar_i)

    def semantic_intent(self, reps: Representations, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        return fm_semantic_intent(reps.user_intent[users], reps.item_intent[items], reps.c_u[users], reps.c_i[items])

    def pair_scores(self, reps: Representations, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        e = self.semantic_intent(reps, users, items)
        return predict(reps.user_id[users], reps.item_id[items], e, self.predictor)

    # --- 全量打分 ---
    def score_users(self, params: Dict[str, np.ndarray], reps: Representations, users: np.ndarray,
                    mode: str = "semantic") -> np.ndarray:
        """返回 (len(users), n_items) 的分数矩阵。"""
        if mode not in SCORE_MODES:
            raise EvaluationError(f"Unknown score mode '{mode}' (expected one of {SCORE_MODES}).")
        users = np.asarray(users, dtype=np.int64)
        delta = self.predictor.delta
        if mode == "semantic":
            item_side = reps.c_i * reps.item_intent * reps.item_id
            return delta * reps.user_id[users] @ reps.item_id.T \
                + (1.0 - delta) * (reps.user_intent[users] * reps.c_u[users]) @ item_side.T
        aspects = params[ASPECT_BANK]
        n_items, dim = reps.item_id.shape
        out = np.empty((users.shape[0], n_items))
        for row, user in enumerate(users):
            u_intent = np.broadcast_to(reps.user_intent[user], (n_items, dim))
            u_id = np.broadcast_to(reps.user_id[user], (n_items, dim))
            masks = inclusion_masks(u_intent, u_id, reps.item_id, aspects, self.predictor)
            out[row] = refined_predict(u_id, reps.item_id, refine(u_intent, aspects, masks), self.predictor)
        return out

    # --- 目标函数 ---
    def bpr_loss(self, params: Dict[str, np.ndarray], batch: TripleBatch, l2: float) -> float:
        """BPR 损失加正则项。"""
        if len(batch) == 0:
            raise ConfigError("bpr_loss needs a non-empty batch.", code="batch_empty")
        reps = self.representations(params)
        loss = bpr_from_scores(self.pair_scores(reps, batch.users, batch.pos), self.pair_scores(reps, batch.users, batch.neg))
        return loss + regularizer(params, self.trainable_names(params), l2)

    def _score_backward(self, reps: Representations, users: np.ndarray, items: np.ndarray, g: np.ndarray,
                        acc: Dict[str, np.ndarray]) -> None:
        delta = self.predictor.delta
        u, i = reps.user_id[users], reps.item_id[items]
        uu, ii = reps.user_intent[users], reps.item_intent[items]
        cu, ci = reps.c_u[users], reps.c_i[items]
        e = (uu * ci) * (cu * ii)
        g = g[:, None]
        n_users, n_items = reps.user_id.shape[0], reps.item_id.shape[0]
        acc["user_id"] += scatter_rows(users, g * delta * i, n_users)
        acc["item_id"] += scatter_rows(items, g * (delta * u + (1.0 - delta) * e), n_items)
        de = g * (1.0 - delta) * i
        acc["user_intent"] += scatter_rows(users, de * ci * cu * ii, n_users)
        acc["item_intent"] += scatter_rows(items, de * uu * ci * cu, n_items)
        acc["c_u"] += scatter_rows(users, de * uu * ci * ii, n_users)
        acc["c_i"] += scatter_rows(items, de * uu * cu * ii, n_items)

    def _fusion_backward(self, params: Dict[str, np.ndarray], tbar: np.ndarray, d_fused: np.ndarray,
                         rows: FusionRows, role: str, grads: Dict[str, np.ndarray]) -> None:
        M_key, b_key = fusion_keys(role)
        d_fused = d_fused.copy()
        d_fused[rows.missing] = 0.0
        grads[M_key] += d_fused.T @ tbar
        grads[b_key] += d_fused.sum(axis=0)
        for name, grad in rows.scatter_mean_grad(d_fused @ params[M_key], self.table_shapes).items():
            grads[TARGET_PREFIX + name] += grad

    def loss_and_grad(self, params: Dict[str, np.ndarray], batch: TripleBatch, objective: ObjectiveConfig,
                      skipgram: Optional[SkipGramBatch] = None, debias: bool = False,
                      masks: Optional[np.ndarray] = None) -> Tuple[LossComponents, Dict[str, np.ndarray], Optional[DebiasResult]]:
        """
        计算 λ_d L_d + λ_θ L_θ + λ_z L_BPR + λ_route L_route + ℛ(Ω) 及其对所有可训练参数的梯度。

        L_θ 是各条路径上每个训练对的平均损失之和；L_route 见 intents.routing_balance。
        debias=False 时 L_d 不参与 (第二阶段)；masks 给出时沿用这组纳入判定。
        """
        reps = self.representations(params)
        n_users, n_items = reps.user_id.shape[0], reps.item_id.shape[0]
        dim = self.disentangle.dim
        acc = {
            "user_id": np.zeros((n_users, dim)), "item_id": np.zeros((n_items, dim)),
            "user_intent": np.zeros((n_users, dim)), "item_intent": np.zeros((n_items, dim)),
            "c_u": np.zeros((n_users, dim)), "c_i": np.zeros((n_items, dim)),
        }
        grads = {name: np.zeros_like(value) for name, value in params.items()}
        components = LossComponents()

        # L_BPR
        s_pos = self.pair_scores(reps, batch.users, batch.pos)
        s_neg = self.pair_scores(reps, batch.users, batch.neg)
        components.bpr = bpr_from_scores(s_pos, s_neg)
        g = objective.lambda_z * (expit(s_pos - s_neg) - 1.0)
        self._score_backward(reps, batch.users, batch.pos, g, acc)
        self._score_backward(reps, batch.users, batch.neg, -g, acc)

        # L_θ
        if skipgram:
            for name in sorted(skipgram):
                centers, contexts, negatives = skipgram[name]
                loss, grad_target, grad_context = skipgram_batch(
                    params[TARGET_PREFIX + name], params[CONTEXT_PREFIX + name], centers, contexts, negatives
                )
                n_pairs = max(centers.shape[0], 1)
                components.theta += loss / n_pairs
                grads[TARGET_PREFIX + name] += (objective.lambda_theta / n_pairs) * grad_target
                grads[CONTEXT_PREFIX + name] += (objective.lambda_theta / n_pairs) * grad_context

        # L_d
        result = None
        if debias:
            rows_u = np.concatenate([batch.users, batch.users])
            rows_i = np.concatenate([batch.pos, batch.neg])
            labels = np.concatenate([np.ones(len(batch)), np.zeros(len(batch))])
            result = refine_and_debias(reps.user_intent[rows_u], reps.user_id[rows_u], reps.item_id[rows_i], labels,
                                       params[ASPECT_BANK], self.predictor, masks)
            components.debias = result.loss
            weight = objective.lambda_d
            acc["user_intent"] += scatter_rows(rows_u, weight * result.d_u_intent, n_users)
            acc["user_id"] += scatter_rows(rows_u, weight * result.d_u, n_users)
            acc["item_id"] += scatter_rows(rows_i, weight * result.d_i, n_items)
            grads[ASPECT_BANK] += weight * result.d_aspects

        # c_u, c_i → 融合参数与路径表
        self._fusion_backward(params, reps.tbar_u, acc["c_u"], self.user_rows, "user", grads)
        self._fusion_backward(params, reps.tbar_i, acc["c_i"], self.item_rows, "item", grads)

        # L_route
        d_final_scores = None
        if objective.lambda_route > 0:
            components.route, d_route = intents.routing_balance(reps.intents, self.graph)
            d_final_scores = objective.lambda_route * d_route

        # u^u, i^i → 意图模块
        d_user, d_item, d_W, d_b = intents.backward(reps.intents, self.graph, params[LAYER_W],
                                                    acc["user_intent"], acc["item_intent"], d_final_scores)
        grads[USER_ID] += acc["user_id"] + d_user
        grads[ITEM_ID] += acc["item_id"] + d_item
        grads[LAYER_W] += d_W
        grads[LAYER_B] += d_b

        trainable = self.trainable_names(params)
        components.reg = regularizer(params, trainable, objective.l2)
        for name in trainable:
            grads[name] += 2.0 * objective.l2 * params[name]
        if self.freeze_aspects:
            grads.pop(ASPECT_BANK, None)
        components.total = total_objective(components, objective)
        return components, grads, result


def initialize_params(interactions: InteractionMatrix, emb: MetaPathEmbeddings, fusion: FusionParams,
                      bank: ContextBank, cfg: DisentangleConfig, seed: int,
                      id_scale: float = 0.1) -> Dict[str, np.ndarray]:
    """ID 嵌入 N(0, id_scale²)，层参数 W = I + 噪声、b = 0，其余取自预训练结果。"""
    if emb.dim != cfg.dim or bank.dim != cfg.dim:
        raise DimensionError(f"Pretrained width {emb.dim} does not match dim={cfg.dim}.")
    rng = stream_rng(seed, 4)
    params = {
        USER_ID: rng.normal(0.0, id_scale, (interactions.n_users, cfg.dim)),
        ITEM_ID: rng.normal(0.0, id_scale, (interactions.n_items, cfg.dim)),
        LAYER_W: np.eye(cfg.chunk)[None, :, :] + C.FUSION_INIT_NOISE * rng.standard_normal((cfg.layers, cfg.chunk, cfg.chunk)),
        LAYER_B: np.zeros((cfg.layers, cfg.chunk)),
        ASPECT_BANK: bank.aspects.copy(),
    }
    for role, node_type in (("user", bank.user_type), ("item", bank.item_type)):
        M_key, b_key = fusion_keys(role)
        M, b = fusion.get(node_type)
        params[M_key] = M.copy()
        params[b_key] = b.copy()
    for name, table in emb.tables.items():
        params[TARGET_PREFIX + name] = table.target.copy()
        params[CONTEXT_PREFIX + name] = table.context.copy()
    return params


def build_model(interactions: InteractionMatrix, emb: MetaPathEmbeddings, bank: ContextBank,
                disentangle: DisentangleConfig, predictor: PredictorParams, freeze_aspects: bool = True) -> CadsiModel:
    """以训练交互建图；用户/物品的路径行号按交互矩阵的顺序排列。"""
    return CadsiModel(
        IntentGraph.from_interactions(interactions),
        fusion_rows(emb, interactions.users, bank.user_type),
        fusion_rows(emb, interactions.items, bank.item_type),
        {name: table.target.shape for name, table in emb.tables.items()},
        bank.aspect_types,
        disentangle,
        predictor,
        freeze_aspects,
    )
