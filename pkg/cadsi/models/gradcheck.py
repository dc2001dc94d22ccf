# cadsi/models/gradcheck.py
"""
中心差分梯度校验
对每个参数组抽取若干元素，比较解析梯度与 (L(θ+h) − L(θ−h)) / 2h。
"""
from typing import Callable, Dict, Optional

import numpy as np

from cadsi.models.model import CadsiModel, ObjectiveConfig, SkipGramBatch, TripleBatch
from cadsi.utils.helpers import relative_error, stream_rng
from cadsi.utils.logger import logger

DEFAULT_STEP = 1e-4


def numeric_gradient(loss_fn: Callable[[Dict[str, np.ndarray]], float], params: Dict[str, np.ndarray], name: str,
                     indices: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """在 params[name] 的扁平下标 indices 处做中心差分；params 原样恢复。"""
    flat = params[name].reshape(-1)
    out = np.empty(indices.shape[0])
    for n, index in enumerate(indices):
        original = flat[index]
        flat[index] = original + step
        plus = loss_fn(params)
        flat[index] = original - step
        minus = loss_fn(params)
        flat[index] = original
        out[n] = (plus - minus) / (2.0 * step)
    return out


def check_gradients(model: CadsiModel, params: Dict[str, np.ndarray], batch: TripleBatch, objective: ObjectiveConfig,
                    skipgram: Optional[SkipGramBatch] = None, debias: bool = False, max_entries: int = 40,
                    seed: int = 0, step: float = DEFAULT_STEP) -> Dict[str, float]:
    """
    返回 {参数组: 相对误差}。去偏项的纳入掩码在基准点求出后固定不变。
    """
    _, grads, result = model.loss_and_grad(params, batch, objective, skipgram, debias)
    masks = result.masks if result is not None else None

    def loss_fn(current: Dict[str, np.ndarray]) -> float:
        components, _, _ = model.loss_and_grad(current, batch, objective, skipgram, debias, masks)
        return components.total

    errors: Dict[str, float] = {}
    for group, name in enumerate(sorted(grads)):
        size = params[name].size
        rng = stream_rng(seed, 5, group)
        indices = np.arange(size) if size <= max_entries else np.sort(rng.choice(size, max_entries, replace=False))
        numeric = numeric_gradient(loss_fn, params, name, indices, step)
        errors[name] = relative_error(grads[name].reshape(-1)[indices], numeric)
        logger.debug(f"gradcheck {name}: relative error {errors[name]:.3e} over {indices.size} entries")
    return errors
