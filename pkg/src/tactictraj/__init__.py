"""Tactic-conditioned multi-agent trajectory diffusion with a Banzhaf-interaction tactic branch."""

from .config import ModelConfig, TrainConfig
from .scenes import DatasetConfig, NormalizationParams, Scene, TacticVocabulary

__version__ = "0.1.0"

__all__ = ["DatasetConfig", "ModelConfig", "NormalizationParams", "Scene", "TacticVocabulary", "TrainConfig", "__version__"]
