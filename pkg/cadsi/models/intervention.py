# cadsi/models/intervention.py
"""
后门调整去偏

对每个方面类型 a，用 do(U = u^u ⊙ c_a) 替换语义项得到 ŷ_C，与零干预 ŷ
(语义项为 u^u) 比较；只有 ŷ_C − ŷ > 0 的方面被纳入，
精炼表示 E = u^u ⊙ Π_{纳入的 a} c_a，未纳入的方面贡献乘法单位元。
去偏损失为 y 与 σ(f(u, i, E)) 的二元交叉熵。
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_expit

from cadsi.models.scoring import PredictorParams, predict
from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError, EmbeddingError, TrainingDivergedError


@dataclass(frozen=True)
class InterventionConfig:
    iterations_n: int = C.DEFAULT_INTERVENTION_ITERS
    eval_every: int = C.DEFAULT_INTERVENTION_EVAL_EVERY
    unfreeze_aspects: bool = False

    def __post_init__(self):
        if self.iterations_n < 1:
            raise ConfigError(f"intervention.iterations_n must be >= 1, got {self.iterations_n}.")
        if self.eval_every < 1:
            raise ConfigError(f"intervention.eval_every must be >= 1, got {self.eval_every}.")

    @staticmethod
    def aspect_prior(n_aspects: int) -> np.ndarray:
        """均匀先验 P(C = c_a) = 1/N。"""
        return np.full(n_aspects, 1.0 / n_aspects)


@dataclass(frozen=True)
class AdjustedPredictionPair:
    y_adjusted: np.ndarray
    y_base: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.y_adjusted - self.y_base


def adjusted_prediction(u_intent: np.ndarray, c_a: np.ndarray, u: np.ndarray, i: np.ndarray,
                        p: PredictorParams) -> AdjustedPredictionPair:
    """ŷ_C: 语义项换成 u^u ⊙ c_a；ŷ: 语义项换成 u^u (零干预)。"""
    if c_a is None:
        raise EmbeddingError("Unknown aspect: no context vector supplied.")
    return AdjustedPredictionPair(predict(u, i, u_intent * c_a, p), predict(u, i, u_intent, p))


def backdoor_effect(u_intent: np.ndarray, u: np.ndarray, i: np.ndarray, aspects: np.ndarray,
                    p: PredictorParams) -> np.ndarray:
    """(1/N) Σ_a (ŷ_C(a) − ŷ)，按打分直接做差。"""
    aspects = np.atleast_2d(aspects)
    if aspects.shape[0] == 0:
        raise EmbeddingError("Context bank holds no aspect embeddings.", code="context_empty")
    prior = InterventionConfig.aspect_prior(aspects.shape[0])
    effects = [adjusted_prediction(u_intent, c_a, u, i, p).difference for c_a in aspects]
    return np.tensordot(prior, np.stack(effects), axes=1)


def indicator(pair: AdjustedPredictionPair, c_a: np.ndarray) -> np.ndarray:
    """tanh(ŷ_C − ŷ) > 0 时返回 c_a，否则 (含相等) 返回全 1 向量。"""
    c_a = np.asarray(c_a, dtype=np.float64)
    return c_a.copy() if float(np.tanh(pair.difference)) > 0 else np.ones_like(c_a)


def inclusion_masks(u_intent: np.ndarray, u: np.ndarray, i: np.ndarray, aspects: np.ndarray,
                    p: PredictorParams) -> np.ndarray:
    """逐行、逐方面的纳入判定，形状 (B, N)。"""
    columns = [np.tanh(adjusted_prediction(u_intent, c_a, u, i, p).difference) > 0 for c_a in aspects]
    if not columns:
        return np.zeros((np.atleast_2d(u_intent).shape[0], 0), dtype=bool)
    return np.column_stack(columns)


def _gate_product(aspects: np.ndarray, masks: np.ndarray, skip: Optional[int] = None) -> np.ndarray:
    """Π_a I_a，I_a 为 c_a 或全 1；skip 指定的方面不参与乘积。"""
    product = np.ones((masks.shape[0], aspects.shape[1]))
    for a in range(aspects.shape[0]):
        if a != skip:
            product = np.where(masks[:, a:a + 1], product * aspects[a], product)
    return product


@dataclass
class RefinedRepr:
    per_aspect: np.ndarray  # (B, N, d)，e_a = u^u ⊙ I_a
    aggregate: np.ndarray  # (B, d)


def refine(u_intent: np.ndarray, aspects: np.ndarray, masks: np.ndarray) -> RefinedRepr:
    u_intent = np.atleast_2d(u_intent)
    gates = np.where(masks[:, :, None], aspects[None, :, :], 1.0)
    aggregate = u_intent * _gate_product(aspects, masks)
    if not np.isfinite(aggregate).all():
        bad_rows = np.flatnonzero(~np.isfinite(aggregate).all(axis=1))
        included = sorted({int(a) for row in bad_rows for a in np.flatnonzero(masks[row])})
        raise TrainingDivergedError(f"Refined representation is non-finite for included aspect set {included}.")
    return RefinedRepr(u_intent[:, None, :] * gates, aggregate)


def refined_predict(u: np.ndarray, i: np.ndarray, refined: RefinedRepr, p: PredictorParams) -> np.ndarray:
    return predict(u, i, refined.aggregate, p)


@dataclass
class DebiasResult:
    loss: float
    d_u_intent: np.ndarray
    d_u: np.ndarray
    d_i: np.ndarray
    d_aspects: np.ndarray
    masks: np.ndarray
    effects: np.ndarray  # (B, N)，ŷ_C(a) − ŷ


def debias_loss(f: np.ndarray, labels: np.ndarray) -> float:
    """Σ BCE(y, σ(f))。"""
    return float(-(labels * log_expit(f) + (1.0 - labels) * log_expit(-f)).sum())


def refine_and_debias(u_intent: np.ndarray, u: np.ndarray, i: np.ndarray, labels: np.ndarray,
                      aspects: np.ndarray, p: PredictorParams, masks: Optional[np.ndarray] = None) -> DebiasResult:
    """
    一个批次的去偏损失及其梯度。masks 未给出时按当前参数重新判定；
    掩码在反向传播中视为常量。
    """
    differences = np.column_stack(
        [adjusted_prediction(u_intent, c_a, u, i, p).difference for c_a in aspects]
    ) if aspects.shape[0] else np.zeros((u.shape[0], 0))
    if masks is None:
        masks = np.tanh(differences) > 0
    refined = refine(u_intent, aspects, masks)
    f = refined_predict(u, i, refined, p)
    loss = debias_loss(f, labels)

    g = (expit(f) - labels)[:, None]
    E = refined.aggregate
    d_u = g * p.delta * i
    d_i = g * (p.delta * u + (1.0 - p.delta) * E)
    d_E = g * (1.0 - p.delta) * i
    d_u_intent = d_E * _gate_product(aspects, masks)
    d_aspects = np.zeros_like(aspects)
    for a in range(aspects.shape[0]):
        rows = masks[:, a]
        if rows.any():
            d_aspects[a] = (d_E[rows] * u_intent[rows] * _gate_product(aspects, masks[rows], skip=a)).sum(axis=0)
    return DebiasResult(loss, d_u_intent, d_u, d_i, d_aspects, masks, differences)


def intervention_summary(aspect_names: Sequence[str], result: DebiasResult) -> Dict[str, Tuple[float, float]]:
    """每个方面的 (纳入比例, 平均分数差 ŷ_C − ŷ)，写入干预轨迹。"""
    if result.masks.shape[0] == 0:
        return {name: (0.0, 0.0) for name in aspect_names}
    return {
        name: (float(result.masks[:, a].mean()), float(result.effects[:, a].mean()))
        for a, name in enumerate(aspect_names)
    }
