# cadsi/systems/trace_system.py
"""
损失轨迹 (TraceSystem)
按损失分量记录每一轮的数值，写出 loss_trace.csv (epoch,component,value)。
任何非有限值都会立即中止训练。
"""
from enum import Enum, auto
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from cadsi.utils import constants as C
from cadsi.utils.errors import TrainingDivergedError
from cadsi.utils.logger import logger


class LossComponent(Enum):
    """损失分量。"""
    BPR = auto()
    THETA = auto()
    DEBIAS = auto()
    REG = auto()
    ROUTE = auto()
    TOTAL = auto()

    def __str__(self):
        return self.name.lower()


class TraceSystem:
    def __init__(self):
        self._rows: List[Tuple[int, LossComponent, float]] = []
        self._latest: Dict[LossComponent, float] = {}

    def record(self, epoch: int, values: Dict[LossComponent, float], dump: Optional[Callable[[], str]] = None) -> None:
        """
        记录一轮的各分量。

        Raises:
            TrainingDivergedError: 出现 NaN/Inf；dump 给出时先调用它写诊断状态，并把路径带进异常。
        """
        bad = [str(component) for component, value in values.items() if not np.isfinite(value)]
        if bad:
            dump_path = dump() if dump is not None else None
            raise TrainingDivergedError(f"Non-finite loss at epoch {epoch} in component(s) {bad}.", dump_path)
        for component in LossComponent:
            if component in values:
                self._rows.append((epoch, component, float(values[component])))
                self._latest[component] = float(values[component])

    def latest(self, component: LossComponent) -> Optional[float]:
        return self._latest.get(component)

    def values(self, component: LossComponent) -> List[float]:
        return [value for _, c, value in self._rows if c is component]

    @property
    def last_epoch(self) -> int:
        return self._rows[-1][0] if self._rows else 0

    def __len__(self) -> int:
        return len(self._rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(epoch, str(component), value) for epoch, component, value in self._rows],
            columns=["epoch", "component", "value"],
        )

    def save(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=C.FLOAT_FORMAT)
        logger.debug(f"Loss trace ({len(self)} rows) written to {path}")

    def summary(self) -> str:
        return ", ".join(f"{component}: {value:.6f}" for component, value in self._latest.items())

    def __str__(self) -> str:
        return f"TraceSystem({self.summary()})"
