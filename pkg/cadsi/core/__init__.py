# cadsi/core/__init__.py
from .config_loader import RunConfig
from .engine import PipelineEngine
from .stage_manager import BaseStage, StageManager

__all__ = ["RunConfig", "PipelineEngine", "StageManager", "BaseStage"]
