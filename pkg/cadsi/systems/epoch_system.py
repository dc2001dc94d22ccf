# cadsi/systems/epoch_system.py
"""
轮次系统 (EpochSystem)
负责管理训练轮次计数，以及每轮结束/开始时的回调 (评估、早停、轨迹记录)。
"""
from typing import Callable, List

from cadsi.utils.logger import logger


def _callback_name(callback: Callable) -> str:
    return callback.__name__ if hasattr(callback, "__name__") else str(callback)


class EpochSystem:
    """
    管理训练轮次。回调不接受参数，需要的状态由回调所属对象自己持有。
    """

    def __init__(self, max_epochs: int, initial_epoch: int = 0):
        """
        Args:
            max_epochs (int): 轮次上限。
            initial_epoch (int): 已完成的轮次数。
        """
        self.max_epochs = max(0, max_epochs)
        self.current_epoch: int = max(0, initial_epoch)
        self._stop_reason = ""
        self._on_epoch_end_callbacks: List[Callable] = []
        self._on_epoch_start_callbacks: List[Callable] = []
        logger.debug(f"EpochSystem initialized: epoch {self.current_epoch}/{self.max_epochs}.")

    def register_on_epoch_end_callback(self, callback: Callable) -> None:
        if callback not in self._on_epoch_end_callbacks:
            self._on_epoch_end_callbacks.append(callback)
            logger.debug(f"Callback {_callback_name(callback)} registered for epoch end.")

    def register_on_epoch_start_callback(self, callback: Callable) -> None:
        if callback not in self._on_epoch_start_callbacks:
            self._on_epoch_start_callbacks.append(callback)
            logger.debug(f"Callback {_callback_name(callback)} registered for epoch start.")

    def unregister_on_epoch_end_callback(self, callback: Callable) -> None:
        if callback in self._on_epoch_end_callbacks:
            self._on_epoch_end_callbacks.remove(callback)

    @staticmethod
    def _execute_callbacks(callbacks: List[Callable]) -> None:
        # 回调里的异常 (例如 TrainingDivergedError) 直接向上传播，中止训练
        for callback in list(callbacks):
            callback()

    def request_stop(self, reason: str) -> None:
        """请求在当前轮结束后停止 (早停)。"""
        if not self._stop_reason:
            self._stop_reason = reason
            logger.info(f"Stop requested after epoch {self.current_epoch}: {reason}")

    @property
    def stop_reason(self) -> str:
        return self._stop_reason

    @property
    def finished(self) -> bool:
        return bool(self._stop_reason) or self.current_epoch >= self.max_epochs

    def begin_epoch(self) -> None:
        self._execute_callbacks(self._on_epoch_start_callbacks)

    def advance_epoch(self) -> None:
        """结束当前轮：计数加一，然后依次执行轮末回调。"""
        self.current_epoch += 1
        logger.debug(f"--- Epoch {self.current_epoch} finished ---")
        self._execute_callbacks(self._on_epoch_end_callbacks)
        if self.current_epoch >= self.max_epochs and not self._stop_reason:
            self._stop_reason = "max_epochs"
