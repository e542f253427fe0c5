"""Minimal dense-tensor core: reverse-mode differentiation, layers, losses, Adam."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ops import (
    Activation,
    ShapeError,
    activation,
    add,
    bce_logits,
    concat,
    conv2d,
    conv2d_transpose,
    dense,
    leaky_relu,
    maxpool2d,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax_cross_entropy,
    sum_all,
    tanh,
)
from .optim import AdamState, adam_step, glorot_uniform
from .tape import Tape, Tensor, backward

__all__ = [
    "Activation",
    "AdamState",
    "CheckpointError",
    "ShapeError",
    "Tape",
    "Tensor",
    "activation",
    "adam_step",
    "add",
    "backward",
    "bce_logits",
    "concat",
    "conv2d",
    "conv2d_transpose",
    "dense",
    "glorot_uniform",
    "leaky_relu",
    "load_checkpoint",
    "maxpool2d",
    "relu",
    "reshape",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "softmax_cross_entropy",
    "sum_all",
    "tanh",
]
