"""From-scratch dynamic convolutional network: wide convolutions, folding,
dynamic k-max pooling, hand-derived gradients, training, and random search."""

from .layers import dynamic_k, fold, kmax_pool, wide_conv
from .model import (
    DESK_PRESET,
    PAPER_PRESET,
    ModelConfig,
    ModelParams,
    backward,
    forward,
    init_params,
    validate_config,
)
from .train import TrainReport, TrainSettings, random_search, split_stratified, train
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "DESK_PRESET",
    "PAPER_PRESET",
    "ModelConfig",
    "ModelParams",
    "TrainReport",
    "TrainSettings",
    "backward",
    "dynamic_k",
    "fold",
    "forward",
    "init_params",
    "kmax_pool",
    "load_checkpoint",
    "random_search",
    "save_checkpoint",
    "split_stratified",
    "train",
    "validate_config",
    "wide_conv",
]
