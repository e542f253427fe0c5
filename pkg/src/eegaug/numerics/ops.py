"""Differentiable primitives.

Every function takes :class:`Tensor` (or array-like) inputs, returns a new
:class:`Tensor`, and records its adjoint on the active tape when needed.
Layouts are NCHW; for time-frequency inputs H is frequency and W is time.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from .tape import Tensor, active_tape, as_tensor, record


class ShapeError(ValueError):
    pass


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def _conv_out_size(n: int, k: int, s: int, p: int) -> int:
    return (n + 2 * p - k) // s + 1


# Patch matrices use the row order (kh, kw, C) and column order (B, ho, wo), so
# every kernel offset is one contiguous slab and each conv is a single matmul.


def _im2col(x: np.ndarray, kh: int, kw: int, stride, padding, ho: int, wo: int) -> np.ndarray:
    sh, sw = stride
    ph, pw = padding
    b, c = x.shape[:2]
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
    xt = xp.transpose(1, 0, 2, 3)
    cols = np.empty((kh, kw, c, b, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[i, j] = xt[:, :, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw]
    return cols.reshape(kh * kw * c, b * ho * wo)


def _col2im(cols: np.ndarray, c: int, b: int, out_hw, kh: int, kw: int, stride, padding, ho: int, wo: int):
    """Adjoint of :func:`_im2col`: sum patch rows back onto a [B, C, H, W] grid."""
    sh, sw = stride
    ph, pw = padding
    h, w = out_hw
    grid = np.zeros((c, b, h + 2 * ph, w + 2 * pw))
    blocks = cols.reshape(kh, kw, c, b, ho, wo)
    for i in range(kh):
        for j in range(kw):
            grid[:, :, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw] += blocks[i, j]
    return np.ascontiguousarray(grid[:, :, ph : ph + h, pw : pw + w].transpose(1, 0, 2, 3))


def _kernel_matrix(w: np.ndarray) -> np.ndarray:
    # [O, C, kh, kw] -> [O, kh*kw*C]
    o = w.shape[0]
    return w.transpose(0, 2, 3, 1).reshape(o, -1)


def _kernel_from_matrix(m: np.ndarray, shape) -> np.ndarray:
    o, c, kh, kw = shape
    return m.reshape(o, kh, kw, c).transpose(0, 3, 1, 2)


def _channels_first(a: np.ndarray) -> np.ndarray:
    # [B, C, H, W] -> [C, B*H*W]
    return a.transpose(1, 0, 2, 3).reshape(a.shape[1], -1)


def _from_channels_first(m: np.ndarray, b: int, h: int, w: int) -> np.ndarray:
    return np.ascontiguousarray(m.reshape(m.shape[0], b, h, w).transpose(1, 0, 2, 3))


def conv2d(x, w, b, stride=1, padding=0) -> Tensor:
    """Cross-correlation of ``x`` [B, C, H, W] with ``w`` [O, C, kh, kw] plus per-channel bias.

    Output spatial size is ``floor((H + 2*ph - kh) / sh) + 1`` (same for W).
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    stride, padding = _pair(stride), _pair(padding)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d channel axis mismatch: input has {x.shape[1]}, kernel expects {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias shape {b.shape} does not match output channels {w.shape[0]}")
    bsz, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = _conv_out_size(h, kh, stride[0], padding[0])
    wo = _conv_out_size(wd, kw, stride[1], padding[1])
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} does not fit padded input {h + 2 * padding[0]}x{wd + 2 * padding[1]}")
    cols = _im2col(x.data, kh, kw, stride, padding, ho, wo)
    wm = _kernel_matrix(w.data)
    out = Tensor(_from_channels_first(wm @ cols + b.data[:, None], bsz, ho, wo))
    tape = active_tape()
    need_dx = tape is not None and tape.is_tracked(x)

    def back(g):
        gm = _channels_first(g)
        dx = _col2im(wm.T @ gm, c, bsz, (h, wd), kh, kw, stride, padding, ho, wo) if need_dx else None
        dw = _kernel_from_matrix(gm @ cols.T, w.shape)
        return dx, dw, gm.sum(axis=1)

    return record("conv2d", (x, w, b), out, back)


def conv2d_transpose(x, w, b, stride=1, padding=0, output_padding=0) -> Tensor:
    """Adjoint of :func:`conv2d` with kernel ``w`` [C_in, C_out, kh, kw], plus bias.

    ``x`` has ``C_in`` channels (the forward convolution's output channels).
    Output size is ``(H - 1)*sh - 2*ph + kh + output_padding``.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    stride, padding, opad = _pair(stride), _pair(padding), _pair(output_padding)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d_transpose expects 4-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"conv2d_transpose channel axis mismatch: input has {x.shape[1]}, kernel expects {w.shape[0]}"
        )
    if b.shape != (w.shape[1],):
        raise ShapeError(f"conv2d_transpose bias shape {b.shape} does not match output channels {w.shape[1]}")
    if any(o >= s for o, s in zip(opad, stride)):
        raise ShapeError("output_padding must be smaller than stride")
    (sh, sw), (ph, pw) = stride, padding
    bsz, _, h, wd = x.shape
    c_out, kh, kw = w.shape[1:]
    out_hw = ((h - 1) * sh - 2 * ph + kh + opad[0], (wd - 1) * sw - 2 * pw + kw + opad[1])
    if out_hw[0] < 1 or out_hw[1] < 1:
        raise ShapeError(f"conv2d_transpose output size {out_hw} is not positive")
    wm = _kernel_matrix(w.data)  # [C_in, kh*kw*C_out]
    xm = _channels_first(x.data)
    raw = _col2im(wm.T @ xm, c_out, bsz, out_hw, kh, kw, stride, padding, h, wd)
    out = Tensor(raw + b.data[None, :, None, None])

    def back(g):
        cols = _im2col(g, kh, kw, stride, padding, h, wd)
        dx = _from_channels_first(wm @ cols, bsz, h, wd)
        dw = _kernel_from_matrix(xm @ cols.T, w.shape)
        return dx, dw, g.sum(axis=(0, 2, 3))

    return record("conv2d_transpose", (x, w, b), out, back)


def dense(x, w, b) -> Tensor:
    """Affine map ``x @ w.T + b`` for ``x`` [B, n_in], ``w`` [n_out, n_in]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"dense shape mismatch: input {x.shape}, weight {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"dense bias shape {b.shape} does not match {w.shape[0]} outputs")
    out = Tensor(x.data @ w.data.T + b.data)

    def back(g):
        return g @ w.data, g.T @ x.data, g.sum(axis=0)

    return record("dense", (x, w, b), out, back)


class Activation(enum.Enum):
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def activation(x, kind: Activation, alpha: float = 0.2) -> Tensor:
    x = as_tensor(x)
    v = x.data
    if kind is Activation.RELU:
        y = np.maximum(v, 0.0)
        deriv = (v > 0).astype(np.float64)
    elif kind is Activation.LEAKY_RELU:
        y = np.where(v > 0, v, alpha * v)
        deriv = np.where(v > 0, 1.0, alpha)
    elif kind is Activation.SIGMOID:
        y = _sigmoid(v)
        deriv = y * (1.0 - y)
    elif kind is Activation.TANH:
        y = np.tanh(v)
        deriv = 1.0 - y * y
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return record(kind.value, (x,), Tensor(y), lambda g: (g * deriv,))


def relu(x) -> Tensor:
    return activation(x, Activation.RELU)


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    return activation(x, Activation.LEAKY_RELU, alpha)


def sigmoid(x) -> Tensor:
    return activation(x, Activation.SIGMOID)


def tanh(x) -> Tensor:
    return activation(x, Activation.TANH)


def maxpool2d(x, size=2) -> Tensor:
    """Non-overlapping max pooling (stride = window); trailing remainder rows/cols are dropped.

    Ties go to the first element of the window in row-major order.
    """
    x = as_tensor(x)
    kh, kw = _pair(size)
    b, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {kh}x{kw} larger than input {h}x{w}")
    blocks = x.data[:, :, : ho * kh, : wo * kw].reshape(b, c, ho, kh, wo, kw)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, kh * kw)
    idx = blocks.argmax(axis=-1)
    out = Tensor(np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0])

    def back(g):
        gb = np.zeros((b, c, ho, wo, kh * kw))
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(b, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho * kh, wo * kw)
        dx = np.zeros((b, c, h, w))
        dx[:, :, : ho * kh, : wo * kw] = gb
        return (dx,)

    return record("maxpool2d", (x,), out, back)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return record("reshape", (x,), Tensor(x.data.reshape(tuple(shape))), lambda g: (g.reshape(old),))


def concat(xs: Sequence, axis: int = 1) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    sizes = [t.shape[axis] for t in xs]
    out = Tensor(np.concatenate([t.data for t in xs], axis=axis))
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return record("concat", tuple(xs), out, back)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    return record("add", (a, b), Tensor(a.data + b.data), lambda g: (g, g))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    return record("scale", (x,), Tensor(c * x.data), lambda g: (c * g,))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return record("sum", (x,), Tensor(x.data.sum()), lambda g: (np.full(shape, g.reshape(-1)[0]),))


def bce_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy on logits, stable for any finite input.

    Per element: ``max(l, 0) - l*t + log1p(exp(-|l|))``, which equals
    ``-[t log s(l) + (1-t) log(1 - s(l))]`` without overflow.
    """
    logits = as_tensor(logits)
    l = logits.data.reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if t.shape != l.shape:
        raise ShapeError(f"bce_logits: {l.size} logits but {t.size} targets")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("bce_logits targets must be 0 or 1")
    n = l.size
    loss = np.mean(np.maximum(l, 0.0) - l * t + np.log1p(np.exp(-np.abs(l))))
    shape = logits.shape

    def back(g):
        return (((_sigmoid(l) - t) * (g.reshape(-1)[0] / n)).reshape(shape),)

    return record("bce_logits", (logits,), Tensor(loss), back)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-softmax probability of the true class."""
    logits = as_tensor(logits)
    z = logits.data
    if z.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy expects [batch, classes], got {logits.shape}")
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    bsz, k = z.shape
    if y.size != bsz:
        raise ShapeError(f"{bsz} logit rows but {y.size} labels")
    if np.any((y < 0) | (y >= k)):
        raise ValueError(f"labels must lie in [0, {k})")
    shifted = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logsumexp[:, None]
    loss = -logp[np.arange(bsz), y].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(bsz), y] -= 1.0
        return (p * (g.reshape(-1)[0] / bsz),)

    return record("softmax_cross_entropy", (logits,), Tensor(loss), back)
