# cadsi/models/optim.py
"""Adam 优化器，作用于 {参数名: ndarray} 字典，原地更新。"""
from typing import Dict, Iterable, Optional

import numpy as np


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 frozen: Optional[Iterable[str]] = None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.frozen = set(frozen or ())
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        # 按名字排序，保证更新顺序固定
        for name in sorted(grads):
            if name in self.frozen or name not in params:
                continue
            grad = grads[name]
            m = self._m.setdefault(name, np.zeros_like(grad))
            v = self._v.setdefault(name, np.zeros_like(grad))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            if self.lr == 0.0:
                continue
            params[name] -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
