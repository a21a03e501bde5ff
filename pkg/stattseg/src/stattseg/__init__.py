from .config import ModelConfig
from .model import Statt
from .patches import PatchSample, extract_patches, patch_positions
from .predict import predict_probs
from .train import train

__all__ = [
    "ModelConfig",
    "Statt",
    "PatchSample",
    "extract_patches",
    "patch_positions",
    "predict_probs",
    "train",
]
