# cadsi/evaluation/ablation.py
"""
消融扫描: 只改变一个超参数，其余保持不变，每个取值做一次完整的训练+评估。
K 轴不需要重训，同一个模型在所有截断位置上评估。
"""
import os
from dataclasses import dataclass
from typing import Any, Callable, List, Mapping, Protocol, Sequence

import pandas as pd

from cadsi.evaluation.metrics import MetricReport
from cadsi.utils import constants as C
from cadsi.utils.errors import ConfigError
from cadsi.utils.logger import logger

AXIS_KEYS = {
    "k": "intents.k",
    "L": "intents.layers",
    "iterations_n": "intervention.iterations_n",
    "K": "eval.ks",
}


class SweepConfig(Protocol):
    def get(self, key: str) -> Any: ...

    def with_overrides(self, overrides: Mapping[str, Any]) -> "SweepConfig": ...


# (配置, 运行标签) → 该配置下的评估报告
Runner = Callable[[SweepConfig, str], MetricReport]


@dataclass
class AblationTable:
    axis: str
    frame: pd.DataFrame

    def save(self, path: str) -> None:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self.frame.to_csv(path, index=False, float_format=C.FLOAT_FORMAT)

    def __len__(self) -> int:
        return len(self.frame)


def parse_values(axis: str, text: str) -> List[int]:
    """'1,2,4' → [1, 2, 4]；空字符串取该轴的默认取值。"""
    if axis not in AXIS_KEYS:
        raise ConfigError(f"Unknown ablation axis '{axis}' (expected one of {sorted(AXIS_KEYS)}).")
    if not text.strip():
        return list(C.ABLATION_DEFAULTS[axis])
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"Ablation values must be integers, got '{text}'.") from exc


def ablation_sweep(axis: str, values: Sequence[int], base: SweepConfig, runner: Runner) -> AblationTable:
    """
    Args:
        axis: k / L / iterations_n / K 之一。
        runner: 在给定配置上完成训练 (及干预) 与评估。iterations_n=0 表示跳过干预阶段。

    Returns:
        每个取值一行。k / L / iterations_n 轴的指标列为 recall@K0、ndcg@K0 (K0 为早停截断，默认 20)；
        K 轴的指标列为 recall@K、ndcg@K，K 即该行的取值。
    """
    if axis not in AXIS_KEYS:
        raise ConfigError(f"Unknown ablation axis '{axis}' (expected one of {sorted(AXIS_KEYS)}).")
    values = [int(v) for v in values]
    if not values:
        raise ConfigError(f"Ablation over '{axis}' needs at least one value.")
    key = AXIS_KEYS[axis]
    logger.info(f"Ablation sweep over {axis} ({key}) with values {values}.")

    if axis == "K":
        if min(values) < 1:
            raise ConfigError("K values must be >= 1.")
        report = runner(base.with_overrides({key: tuple(values)}), "K")
        frame = pd.DataFrame({
            "axis": axis,
            "value": values,
            "recall@K": [report.recall[K] for K in values],
            "ndcg@K": [report.ndcg[K] for K in values],
        })
        return AblationTable(axis, frame)

    cutoff = int(base.get("train.early_stop_k"))
    rows = []
    for value in values:
        config = base.with_overrides({key: value, "eval.ks": (cutoff,)})
        report = runner(config, f"{axis}={value}")
        rows.append((axis, value, report.recall[cutoff], report.ndcg[cutoff]))
        logger.info(f"Ablation {axis}={value}: R@{cutoff}={report.recall[cutoff]:.4f} N@{cutoff}={report.ndcg[cutoff]:.4f}")
    return AblationTable(axis, pd.DataFrame(rows, columns=["axis", "value", f"recall@{cutoff}", f"ndcg@{cutoff}"]))
