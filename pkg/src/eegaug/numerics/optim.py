"""Adam optimizer and parameter initialisation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter has {p.shape}")
        m_old = state.m.get(name)
        v_old = state.v.get(name)
        # fresh arrays updated in place: the update is memory bound
        m = (1.0 - state.beta1) * g
        v = np.square(g)
        v *= 1.0 - state.beta2
        if m_old is not None:
            m += state.beta1 * m_old
            v += state.beta2 * v_old
        denom = v / bc2
        np.sqrt(denom, out=denom)
        denom += state.eps
        step = m * (state.lr / bc1)
        step /= denom
        new_params[name] = p - step
        new_m[name], new_v[name] = m, v
    return new_params, replace(state, step=t, m=new_m, v=new_v)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)).

    Dense weights are [out, in]; conv kernels [out, in, kh, kw] (transposed
    conv kernels [in, out, kh, kw] give the same fan sum).
    """
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_sum = (shape[0] + shape[1]) * receptive
    limit = np.sqrt(6.0 / fan_sum)
    return rng.uniform(-limit, limit, size=shape)
