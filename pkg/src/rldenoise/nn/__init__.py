from .layers import (
    Parameter,
    Layer,
    Conv2D,
    Conv3D,
    Dense,
    NoisyDense,
    LeakyReLU,
    ELU,
    GlobalAvgPool,
    Flatten,
    Softmax,
    Sequential,
)
from .adam import Adam
from .checkpoint import save_checkpoint, load_checkpoint, restore_parameters

__all__ = [
    "Parameter",
    "Layer",
    "Conv2D",
    "Conv3D",
    "Dense",
    "NoisyDense",
    "LeakyReLU",
    "ELU",
    "GlobalAvgPool",
    "Flatten",
    "Softmax",
    "Sequential",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
    "restore_parameters",
]
