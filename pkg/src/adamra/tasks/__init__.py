"""Synthetic tasks and a small trainer for end-to-end learnability checks."""

from .data import Dataset, gen_copy_task, gen_nested_ops
from .model import ModelConfig
from .train import TrainHyper, TrainReport, train

__all__ = [
    "Dataset",
    "ModelConfig",
    "TrainHyper",
    "TrainReport",
    "gen_copy_task",
    "gen_nested_ops",
    "train",
]
