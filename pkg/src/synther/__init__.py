"""Synthetic experience replay: diffusion-upsampled transition data for RL."""

from synther.data import (
    Normalizer,
    ReplayBuffer,
    ReplayPair,
    TransitionDataset,
    TransitionSchema,
    fit_normalizer,
    load_dataset,
    save_dataset,
)
from synther.diffusion import DiffusionModel, EDMConfig

__all__ = [
    "TransitionSchema",
    "TransitionDataset",
    "Normalizer",
    "ReplayBuffer",
    "ReplayPair",
    "fit_normalizer",
    "save_dataset",
    "load_dataset",
    "EDMConfig",
    "DiffusionModel",
]

__version__ = "0.1.0"
