from .layers import (
    Conv1d,
    Conv2d,
    ConvTranspose1d,
    ConvTranspose2d,
    FiLM,
    GroupNorm,
    Linear,
    Module,
    Param,
    ReLU,
    ShapeError,
    SiLU,
    SinusoidalEmbedding,
)
from .losses import mse, smooth_l1
from .optim import SGD, AdamW, clip_gradients, zero_grads
from .checkpoint import load_params, save_params, assign_params

__all__ = [
    "Conv1d", "Conv2d", "ConvTranspose1d", "ConvTranspose2d", "FiLM",
    "GroupNorm", "Linear", "Module", "Param", "ReLU", "ShapeError", "SiLU",
    "SinusoidalEmbedding", "mse", "smooth_l1", "SGD", "AdamW",
    "clip_gradients", "zero_grads", "load_params", "save_params",
    "assign_params",
]
