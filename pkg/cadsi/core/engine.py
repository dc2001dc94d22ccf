# cadsi/core/engine.py
"""
流水线引擎
持有阶段管理器与配置来源 (配置文件路径 + --set 覆盖项)，按命令名运行阶段。
"""
from typing import Any, Iterable, Optional, Sequence, Type

from cadsi.core.stage_manager import BaseStage, StageManager
from cadsi.core.stages import ALL_STAGES
from cadsi.utils.logger import logger


class PipelineEngine:
    def __init__(self, config_path: Optional[str] = None, overrides: Iterable[str] = (),
                 stages: Sequence[Type[BaseStage]] = ALL_STAGES):
        self.stage_manager = StageManager({"config_path": config_path, "overrides": list(overrides)})
        self._register_stages(stages)
        logger.info(f"PipelineEngine initialized (config={config_path or 'defaults'}, "
                    f"{len(self.stage_manager.context['overrides'])} override(s)).")

    def _register_stages(self, stages: Sequence[Type[BaseStage]]) -> None:
        for stage_class in stages:
            self.stage_manager.register_stage(stage_class.name, stage_class)
        logger.debug(f"Stages registered: {sorted(self.stage_manager.stages)}")

    @property
    def commands(self) -> Sequence[str]:
        return tuple(self.stage_manager.stages)

    def run(self, command: str, **kwargs) -> Any:
        logger.info(f"Running '{command}'...")
        result = self.stage_manager.run_stage(command, **kwargs)
        logger.info(f"'{command}' finished.")
        return result
