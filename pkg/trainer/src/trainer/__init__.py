"""Toy-scale U-Net trainer for spine mask workspaces.

Talks to the curation toolkit only through files: manifest JSONL,
grayscale label rasters and exported loss vector files.
"""

from .config import LossSettings, TrainConfig
from .model import build_model

__all__ = ["LossSettings", "TrainConfig", "build_model"]
