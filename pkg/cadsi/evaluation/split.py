# cadsi/evaluation/split.py
"""按用户随机划分训练/验证/测试交互。"""
import math
import os
from dataclasses import dataclass

import numpy as np

from cadsi.graph.hin import InteractionMatrix
from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError, EvaluationError
from cadsi.utils.helpers import stream_rng
from cadsi.utils.logger import logger

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class SplitConfig:
    train: float = C.DEFAULT_SPLIT[0]
    validation: float = C.DEFAULT_SPLIT[1]
    test: float = C.DEFAULT_SPLIT[2]
    seed: int = C.DEFAULT_SEED

    def __post_init__(self):
        ratios = (self.train, self.validation, self.test)
        if min(ratios) < 0 or self.train <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"Split ratios must be non-negative with train > 0 and sum to 1, got {ratios}.")


@dataclass
class DataSplit:
    train: InteractionMatrix
    validation: InteractionMatrix
    test: InteractionMatrix

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        for name in SPLIT_NAMES:
            getattr(self, name).save(os.path.join(out_dir, f"{name}.tsv"))

    @classmethod
    def load(cls, in_dir: str, universe: InteractionMatrix) -> "DataSplit":
        parts = {}
        for name in SPLIT_NAMES:
            path = os.path.join(in_dir, f"{name}.tsv")
            if not os.path.exists(path):
                raise EvaluationError(f"Split file missing: {path}", code="checkpoint_missing")
            parts[name] = universe.load_pairs(path)
        return cls(**parts)


def split(interactions: InteractionMatrix, cfg: SplitConfig) -> DataSplit:
    """
    每个用户的交互随机打乱后按比例切分 (四舍五入)，训练集至少保留 1 条。
    用户 u 的打乱只依赖 (seed, u)。
    """
    parts = {name: [] for name in SPLIT_NAMES}
    floored = 0
    for user in range(interactions.n_users):
        items = interactions.items_of(user)
        n = items.shape[0]
        if n == 0:
            continue
        order = stream_rng(cfg.seed, 6, user).permutation(items)
        n_test = math.floor(n * cfg.test + 0.5)
        n_val = math.floor(n * cfg.validation + 0.5)
        if n - n_test - n_val < 1:
            floored += 1
            n_val = max(0, min(n_val, n - 1 - n_test))
            n_test = max(0, min(n_test, n - 1 - n_val))
        cut = {"test": order[:n_test], "validation": order[n_test:n_test + n_val], "train": order[n_test + n_val:]}
        for name in SPLIT_NAMES:
            parts[name].extend((user, int(item)) for item in cut[name])
    if floored:
        logger.warning(f"{floored} user(s) had too few interactions for the split ratios; extra mass went to train.")
    result = DataSplit(*(interactions.with_pairs(np.array(parts[name], dtype=np.int64).reshape(-1, 2))
                         for name in SPLIT_NAMES))
    logger.info(f"Split {interactions.n_interactions} interactions into "
                f"{result.train.n_interactions}/{result.validation.n_interactions}/{result.test.n_interactions}.")
    return result
