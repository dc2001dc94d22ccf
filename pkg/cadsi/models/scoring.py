# cadsi/models/scoring.py
"""
打分基元：FM 语义意图表示与预测函数。
model 与 intervention 都依赖这里，单独成模块避免循环导入。
"""
from dataclasses import dataclass

import numpy as np

from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError, DimensionError


@dataclass(frozen=True)
class PredictorParams:
    """delta 为 ID 项 uᵀi 的权重，1 − delta 为语义项 eᵀi 的权重。"""
    delta: float = C.DEFAULT_DELTA

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}.")


def fm_semantic_intent(u_intent: np.ndarray, i_intent: np.ndarray, c_u: np.ndarray, c_i: np.ndarray) -> np.ndarray:
    """
    二阶 FM 语义意图表示 e = (u^u ⊙ c_i) ⊙ (c_u ⊙ i^i)。
    支持按行广播，最后一维为 d。
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in (u_intent, i_intent, c_u, c_i)]
    widths = {a.shape[-1] for a in arrays}
    if len(widths) != 1:
        raise DimensionError(f"FM inputs disagree in width: {[a.shape for a in arrays]}.")
    u_intent, i_intent, c_u, c_i = arrays
    return (u_intent * c_i) * (c_u * i_intent)


def predict(u: np.ndarray, i: np.ndarray, e: np.ndarray, p: PredictorParams) -> np.ndarray:
    """ŷ = δ·uᵀi + (1 − δ)·eᵀi，沿最后一维求内积。"""
    u, i, e = (np.asarray(a, dtype=np.float64) for a in (u, i, e))
    if not (u.shape[-1] == i.shape[-1] == e.shape[-1]):
        raise DimensionError(f"predict() inputs disagree in width: {u.shape}, {i.shape}, {e.shape}.")
    return p.delta * (u * i).sum(axis=-1) + (1.0 - p.delta) * (e * i).sum(axis=-1)
