# cadsi/data/__init__.py
from .synth import GroundTruth, SynthConfig, generate, preset, skew_report

__all__ = ["GroundTruth", "SynthConfig", "generate", "preset", "skew_report"]
