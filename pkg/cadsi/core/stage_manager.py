# cadsi/core/stage_manager.py
"""
阶段管理器
负责注册流水线阶段 (synth、pretrain、train ...) 并按名字运行。
每次运行都会新建阶段实例: on_enter → run → on_exit。
"""
from typing import Any, Callable, Dict, List, Optional, Tuple, Type, Union

from cadsi.utils.errors import ConfigError
from cadsi.utils.logger import logger


class BaseStage:
    """
    流水线阶段的基类。
    具体阶段实现 run()，通过 self.manager 取得运行配置与线程数等共享上下文。
    """
    name = "stage"

    def __init__(self, manager: "StageManager"):
        self.manager = manager
        logger.debug(f"Stage '{self.__class__.__name__}' initialized.")

    def on_enter(self, **kwargs) -> None:
        logger.info(f"Entering stage '{self.name}' with args: {kwargs}")

    def run(self, **kwargs) -> Any:
        raise NotImplementedError

    def on_exit(self) -> None:
        logger.info(f"Exiting stage '{self.name}'.")


StageFactory = Union[Type[BaseStage], Callable[["StageManager"], BaseStage]]


class StageManager:
    """
    按名字保存阶段类 (不是实例)，run_stage 时才实例化。
    与交互式的状态切换不同，阶段里的异常原样抛出，交给 CLI 转成退出码。
    """

    def __init__(self, context: Optional[Dict[str, Any]] = None):
        self.stages: Dict[str, StageFactory] = {}
        self.context: Dict[str, Any] = dict(context or {})
        self.active_stage: Optional[BaseStage] = None
        self.active_stage_name: Optional[str] = None
        self.history: List[Tuple[str, str]] = []  # (阶段名, 结果: ok / 错误类名)
        logger.debug("StageManager initialized.")

    def register_stage(self, name: str, stage_class: StageFactory) -> None:
        if name in self.stages:
            logger.warning(f"Stage '{name}' already registered. Overwriting with {stage_class}.")
        self.stages[name] = stage_class
        logger.debug(f"Stage '{name}' registered.")

    def has_stage(self, name: str) -> bool:
        return name in self.stages

    def run_stage(self, name: str, **kwargs) -> Any:
        if name not in self.stages:
            raise ConfigError(f"Stage '{name}' not registered.", code="unknown_command")
        stage = self.stages[name](self)
        if not isinstance(stage, BaseStage):
            raise ConfigError(f"Factory for stage '{name}' did not produce a BaseStage: {type(stage)}")
        self.active_stage, self.active_stage_name = stage, name
        stage.on_enter(**kwargs)
        try:
            result = stage.run(**kwargs)
        except Exception as exc:
            self.history.append((name, type(exc).__name__))
            logger.error(f"Stage '{name}' failed: {exc}")
            raise
        finally:
            stage.on_exit()
            self.active_stage, self.active_stage_name = None, None
        self.history.append((name, "ok"))
        return result
