"""Declarative layer stacks evaluated on top of the differentiable primitives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from . import ops
from .optim import glorot_uniform
from .tape import Tensor, as_tensor


@dataclass(frozen=True)
class Dense:
    name: str
    n_in: int
    n_out: int


@dataclass(frozen=True)
class Conv:
    name: str
    in_ch: int
    out_ch: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class ConvTranspose:
    name: str
    in_ch: int
    out_ch: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class Act:
    kind: ops.Activation
    alpha: float = 0.2


@dataclass(frozen=True)
class MaxPool:
    size: tuple[int, int]


@dataclass(frozen=True)
class Reshape:
    shape: tuple[int, ...]  # per-sample shape, batch axis excluded


@dataclass(frozen=True)
class Flatten:
    pass


Layer = Union[Dense, Conv, ConvTranspose, Act, MaxPool, Reshape, Flatten]


def param_shapes(layers: Sequence[Layer]) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in layers:
        if isinstance(layer, Dense):
            shapes[f"{layer.name}.w"] = (layer.n_out, layer.n_in)
            shapes[f"{layer.name}.b"] = (layer.n_out,)
        elif isinstance(layer, Conv):
            shapes[f"{layer.name}.w"] = (layer.out_ch, layer.in_ch, *layer.kernel)
            shapes[f"{layer.name}.b"] = (layer.out_ch,)
        elif isinstance(layer, ConvTranspose):
            shapes[f"{layer.name}.w"] = (layer.in_ch, layer.out_ch, *layer.kernel)
            shapes[f"{layer.name}.b"] = (layer.out_ch,)
    return shapes


def init_params(layers: Sequence[Layer], rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Scaled-uniform weights, zero biases."""
    out = {}
    for name, shape in param_shapes(layers).items():
        out[name] = glorot_uniform(rng, shape) if name.endswith(".w") else np.zeros(shape)
    return out


def forward(layers: Sequence[Layer], params: Mapping[str, Tensor | np.ndarray], x) -> Tensor:
    h = as_tensor(x)
    for layer in layers:
        if isinstance(layer, Dense):
            h = ops.dense(h, params[f"{layer.name}.w"], params[f"{layer.name}.b"])
        elif isinstance(layer, Conv):
            h = ops.conv2d(h, params[f"{layer.name}.w"], params[f"{layer.name}.b"], layer.stride, layer.padding)
        elif isinstance(layer, ConvTranspose):
            h = ops.conv2d_transpose(
                h, params[f"{layer.name}.w"], params[f"{layer.name}.b"], layer.stride, layer.padding
            )
        elif isinstance(layer, Act):
            h = ops.activation(h, layer.kind, layer.alpha)
        elif isinstance(layer, MaxPool):
            h = ops.maxpool2d(h, layer.size)
        elif isinstance(layer, Reshape):
            h = ops.reshape(h, (h.shape[0], *layer.shape))
        elif isinstance(layer, Flatten):
            h = ops.reshape(h, (h.shape[0], -1))
        else:
            raise TypeError(f"unknown layer {layer!r}")
    return h


def output_shape(layers: Sequence[Layer], input_shape: Sequence[int]) -> tuple[int, ...]:
    """Per-sample output shape, found by a forward pass on zeros."""
    zeros = {k: np.zeros(s) for k, s in param_shapes(layers).items()}
    return forward(layers, zeros, np.zeros((1, *input_shape))).shape[1:]
