# cadsi/evaluation/metrics.py
"""
全量排序评估：Recall@K 与 NDCG@K (二值增益)
每个用户对所有不在其训练集中的物品排序，分数降序，同分按物品下标升序。
指标只在测试集非空的用户上平均。
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from cadsi.graph.hin import InteractionMatrix
from cadsi.utils import constants as C
from cadsi.utils.errors import EvaluationError
from cadsi.utils.logger import logger

# users → (len(users), n_items) 分数矩阵
ScoreFn = Callable[[np.ndarray], np.ndarray]


def rank_items(scores: np.ndarray, exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """返回排序后的物品下标，exclude 中的物品 (训练集) 不出现。"""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    if exclude is not None and len(exclude):
        order = order[~np.isin(order, exclude)]
    return order


def recall_at_k(ranked: np.ndarray, test_items: Sequence[int], K: int) -> Optional[float]:
    """|top-K ∩ test| / |test|；测试集为空返回 None。"""
    if K < 1:
        raise EvaluationError(f"K must be >= 1, got {K}.")
    test = set(int(i) for i in test_items)
    if not test:
        return None
    hits = sum(1 for item in ranked[:K] if int(item) in test)
    return hits / len(test)


def ndcg_at_k(ranked: np.ndarray, test_items: Sequence[int], K: int) -> Optional[float]:
    """DCG@K / IDCG@K，折扣 1/log2(rank+1)，理想序列长度 min(|test|, K)。"""
    if K < 1:
        raise EvaluationError(f"K must be >= 1, got {K}.")
    test = set(int(i) for i in test_items)
    if not test:
        return None
    top = np.asarray(ranked[:K])
    gains = np.array([1.0 if int(item) in test else 0.0 for item in top])
    discounts = 1.0 / np.log2(np.arange(2, top.shape[0] + 2))
    ideal = (1.0 / np.log2(np.arange(2, min(len(test), K) + 2))).sum()
    return float((gains * discounts).sum() / ideal)


@dataclass
class MetricReport:
    """每个 K 的平均 Recall/NDCG 与参与平均的用户数。"""
    ks: tuple
    recall: Dict[int, float] = field(default_factory=dict)
    ndcg: Dict[int, float] = field(default_factory=dict)
    n_users: Dict[int, int] = field(default_factory=dict)
    per_user: Optional[pd.DataFrame] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "K": list(self.ks),
            "recall": [self.recall[K] for K in self.ks],
            "ndcg": [self.ndcg[K] for K in self.ks],
            "n_users": [self.n_users[K] for K in self.ks],
        })

    def save(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=C.FLOAT_FORMAT)


def evaluate(score_fn: ScoreFn, train: InteractionMatrix, test: InteractionMatrix, ks: Sequence[int],
             item_filter: Optional[np.ndarray] = None, batch_users: int = 256,
             keep_per_user: bool = False) -> MetricReport:
    """
    Args:
        score_fn: 给定用户下标数组，返回这些用户对全部物品的分数。
        item_filter: 布尔掩码；给出时测试集只保留掩码为真的物品 (少数属性物品评估)。

    Raises:
        EvaluationError: 排序结果中出现训练物品 (数据泄漏)。
    """
    ks = tuple(int(K) for K in ks)
    max_k = max(ks)
    users = np.array([u for u in range(test.n_users) if test.items_of(u).size], dtype=np.int64)
    if item_filter is not None:
        users = np.array([u for u in users if item_filter[test.items_of(u)].any()], dtype=np.int64)
    sums_r = {K: 0.0 for K in ks}
    sums_n = {K: 0.0 for K in ks}
    rows: List[dict] = []
    for start in range(0, users.shape[0], batch_users):
        block = users[start:start + batch_users]
        scores = score_fn(block)
        for row, user in enumerate(block):
            train_items = train.items_of(user)
            ranked = rank_items(scores[row], train_items)
            if np.isin(ranked[:max_k], train_items).any():
                raise EvaluationError(f"Training items of user {train.users[user]} leaked into the ranking.",
                                      code="evaluation_leakage")
            test_items = test.items_of(user)
            if item_filter is not None:
                test_items = test_items[item_filter[test_items]]
            record = {"user": train.users[user]}
            for K in ks:
                r = recall_at_k(ranked, test_items, K)
                n = ndcg_at_k(ranked, test_items, K)
                sums_r[K] += r
                sums_n[K] += n
                record[f"recall@{K}"] = r
                record[f"ndcg@{K}"] = n
            if keep_per_user:
                rows.append(record)
    count = int(users.shape[0])
    if count == 0:
        logger.warning("No user has a non-empty test set; metrics reported as 0.")
    report = MetricReport(
        ks,
        {K: sums_r[K] / count if count else 0.0 for K in ks},
        {K: sums_n[K] / count if count else 0.0 for K in ks},
        {K: count for K in ks},
        pd.DataFrame(rows) if keep_per_user else None,
    )
    logger.info("Evaluation: " + ", ".join(f"R@{K}={report.recall[K]:.4f} N@{K}={report.ndcg[K]:.4f}" for K in ks)
                + f" over {count} user(s).")
    return report
