# cadsi/systems/__init__.py
from .epoch_system import EpochSystem
from .trace_system import LossComponent, TraceSystem
from .training_system import TrainConfig, TrainingSystem

__all__ = ["EpochSystem", "LossComponent", "TraceSystem", "TrainConfig", "TrainingSystem"]
