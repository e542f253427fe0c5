"""Tensors and the reverse-mode tape that records operations applied to them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_ACTIVE: list["Tape"] = []


class Tensor:
    """Dense double-precision array with an identity the tape can track."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of primitive applications plus a parameter registry.

    Use as a context manager; operations run inside the ``with`` block are
    recorded when at least one of their inputs is a registered parameter or
    the output of an already recorded node. Everything else is treated as a
    constant, which keeps the record small.
    """

    nodes: list[Node] = field(default_factory=list)
    params: dict[str, Tensor] = field(default_factory=dict)
    _tracked: set[int] = field(default_factory=set, repr=False)

    def watch(self, params: dict[str, Tensor]) -> dict[str, Tensor]:
        for name, t in params.items():
            if not isinstance(t, Tensor):
                raise TypeError(f"parameter {name!r} must be a Tensor")
            self.params[name] = t
            self._tracked.add(id(t))
        return params

    def is_tracked(self, t: Tensor) -> bool:
        return id(t) in self._tracked

    def record(self, kind, inputs, output, backward) -> None:
        self.nodes.append(Node(kind, tuple(inputs), output, backward))
        self._tracked.add(id(output))

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        return backward(self, loss)


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def record(kind: str, inputs: Sequence[Tensor], output: Tensor, backward_fn) -> Tensor:
    """Register ``output`` on the active tape if any input is tracked."""
    tape = active_tape()
    if tape is not None and any(tape.is_tracked(t) for t in inputs):
        tape.record(kind, inputs, output, backward_fn)
    return output


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradient of a scalar ``loss`` with respect to every registered parameter.

    Nodes are stored in execution order, which is a topological order of the
    DAG, so one reverse sweep visits each node exactly once. Parameters that
    the loss does not depend on get a zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not tape.is_tracked(t):
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    return {
        name: grads.get(id(p), np.zeros_like(p.data)) for name, p in tape.params.items()
    }
