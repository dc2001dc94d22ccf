# cadsi/models/__init__.py
from .hetsg import ContextBank, FusionParams, MetaPathEmbeddings, SkipGramConfig, train_skipgram
from .intents import DisentangleConfig, IntentGraph
from .intervention import InterventionConfig
from .model import CadsiModel, ObjectiveConfig, TripleBatch, build_model, initialize_params
from .optim import Adam
from .scoring import PredictorParams

__all__ = [
    "ContextBank", "FusionParams", "MetaPathEmbeddings", "SkipGramConfig", "train_skipgram",
    "DisentangleConfig", "IntentGraph", "InterventionConfig",
    "CadsiModel", "ObjectiveConfig", "TripleBatch", "build_model", "initialize_params",
    "Adam", "PredictorParams",
]
