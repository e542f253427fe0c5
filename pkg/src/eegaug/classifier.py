"""CNN over TFRs: architecture description, training, evaluation and persistence.

The network is a stack of ``conv -> Relu -> maxpool`` blocks followed by
dense layers with Relu between them and a linear head with one logit per
class. Training minimizes softmax cross-entropy with Adam over shuffled
minibatches; every random choice derives from one integer seed.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import AdamState, Tape, Tensor, adam_step, load_checkpoint, save_checkpoint, softmax_cross_entropy
from .numerics.layers import Act, Conv, Dense, Flatten, Layer, MaxPool, forward, init_params
from .numerics.ops import Activation
from .wavelet import as_arrays


class ClassifierError(ValueError):
    pass


class ClassifierTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConvBlock:
    out_channels: int
    kernel: tuple[int, int] = (3, 5)  # (freq, time)
    stride: tuple[int, int] = (1, 1)
    pool: tuple[int, int] | None = (1, 2)  # time-only pooling by default; the frequency axis is short


@dataclass(frozen=True)
class CnnArch:
    input_shape: tuple[int, int, int] = (3, 9, 64)
    conv_blocks: tuple[ConvBlock, ...] = (ConvBlock(16), ConvBlock(32))
    dense_widths: tuple[int, ...] = (64,)
    class_count: int = 2

    def __post_init__(self):
        if self.class_count < 2:
            raise ClassifierError("class_count must be at least 2")
        self.feature_shape()  # validates the chain

    def feature_shape(self) -> tuple[int, int, int]:
        """Per-sample shape after the conv/pool blocks."""
        c, h, w = self.input_shape
        for i, blk in enumerate(self.conv_blocks):
            (kh, kw), (sh, sw) = blk.kernel, blk.stride
            h, w = (h - kh) // sh + 1, (w - kw) // sw + 1
            if h < 1 or w < 1:
                raise ClassifierError(f"conv block {i} kernel {blk.kernel} does not fit its input")
            if blk.pool is not None:
                h, w = h // blk.pool[0], w // blk.pool[1]
                if h < 1 or w < 1:
                    raise ClassifierError(f"pool {blk.pool} in block {i} leaves an empty map")
            c = blk.out_channels
        return c, h, w

    def feature_layers(self) -> list[Layer]:
        layers: list[Layer] = []
        c = self.input_shape[0]
        for i, blk in enumerate(self.conv_blocks):
            layers += [Conv(f"c{i}", c, blk.out_channels, blk.kernel, blk.stride), Act(Activation.RELU)]
            if blk.pool is not None:
                layers.append(MaxPool(blk.pool))
            c = blk.out_channels
        return layers

    def layers(self) -> list[Layer]:
        layers = self.feature_layers() + [Flatten()]
        n = int(np.prod(self.feature_shape()))
        for i, width in enumerate(self.dense_widths):
            layers += [Dense(f"fc{i}", n, width), Act(Activation.RELU)]
            n = width
        layers.append(Dense("head", n, self.class_count))
        return layers


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 60

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ClassifierError("lr and batch_size must be positive, epochs non-negative")


@dataclass(frozen=True)
class Classifier:
    arch: CnnArch
    params: dict[str, np.ndarray]
    epoch_losses: tuple[float, ...] = ()

    @property
    def final_loss(self) -> float | None:
        return self.epoch_losses[-1] if self.epoch_losses else None


def _check_input(x: np.ndarray, arch: CnnArch) -> None:
    if x.ndim != 4 or x.shape[1:] != tuple(arch.input_shape):
        raise ClassifierError(f"expected input [batch, {', '.join(map(str, arch.input_shape))}], got {x.shape}")


def clf_forward(x, arch: CnnArch, params) -> Tensor:
    """Logits [batch, class_count] for inputs [batch, C, F, T]."""
    xt = x if isinstance(x, Tensor) else Tensor(x)
    _check_input(xt.data, arch)
    return forward(arch.layers(), params, xt)


def conv_features(x, arch: CnnArch, params) -> Tensor:
    """Output of the conv/Relu/pool blocks only."""
    xt = x if isinstance(x, Tensor) else Tensor(x)
    _check_input(xt.data, arch)
    return forward(arch.feature_layers(), params, xt)


def init_classifier(arch: CnnArch, seed: int) -> Classifier:
    init_seq, _ = np.random.SeedSequence(seed).spawn(2)
    return Classifier(arch, init_params(arch.layers(), np.random.default_rng(init_seq)))


def train_classifier(train, arch: CnnArch = CnnArch(), hyper: TrainHyper = TrainHyper(), seed: int = 0) -> Classifier:
    """Fit ``arch`` to labelled TFRs (list of :class:`Tfr` or ``(x, y)`` arrays).

    The initialization depends on ``seed`` alone, so two calls with the same
    seed and different training data start from identical parameters.
    """
    x, y = as_arrays(train)
    _check_input(x, arch)
    for k in range(arch.class_count):
        if not np.any(y == k):
            raise ClassifierError(f"class {k} has no training samples")
    if np.any((y < 0) | (y >= arch.class_count)):
        raise ClassifierError(f"labels must lie in [0, {arch.class_count})")

    clf = init_classifier(arch, seed)
    params = dict(clf.params)
    _, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(shuffle_seq)
    opt = AdamState(lr=hyper.lr)
    layers = arch.layers()
    losses = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            tp = {k: Tensor(v) for k, v in params.items()}
            with Tape() as tape:
                tape.watch(tp)
                loss = softmax_cross_entropy(forward(layers, tp, x[idx]), y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise ClassifierTrainingError(f"non-finite training loss in epoch {epoch}")
            params, opt = adam_step(params, tape.backward(loss), opt)
            total += value * len(idx)
        losses.append(total / len(x))
    return Classifier(arch, params, tuple(losses))


def predict(clf: Classifier, x: np.ndarray, batch: int = 256) -> np.ndarray:
    """Argmax class per sample; equal logits resolve to the lower index."""
    x = np.asarray(x, dtype=np.float64)
    _check_input(x, clf.arch)
    out = [np.argmax(clf_forward(x[s : s + batch], clf.arch, clf.params).data, axis=1)
           for s in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    per_class: tuple[float, ...]  # recall per true class, nan for a class absent from the test set
    confusion: np.ndarray = field(repr=False)  # [true, predicted]
    n_test: int

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_count: int = 2) -> "Metrics":
        y_true, y_pred = np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)
        if y_true.size == 0:
            raise ClassifierError("empty test set")
        conf = np.zeros((class_count, class_count), dtype=np.int64)
        np.add.at(conf, (y_true, y_pred), 1)
        rows = conf.sum(axis=1)
        per_class = tuple(float(conf[k, k] / rows[k]) if rows[k] else float("nan") for k in range(class_count))
        return cls(float(np.trace(conf) / conf.sum()), per_class, conf, int(y_true.size))


def evaluate(clf: Classifier, test) -> Metrics:
    x, y = as_arrays(test) if not (isinstance(test, Sequence) and len(test) == 0) else (None, None)
    if x is None or len(x) == 0:
        raise ClassifierError("empty test set")
    return Metrics.from_predictions(y, predict(clf, x), clf.arch.class_count)


METRICS_HEADER = ("condition", "seed", "accuracy", "acc_left", "acc_right", "n_test")


def metrics_csv(rows: Sequence[tuple[str, int, Metrics]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for condition, seed, m in rows:
        w.writerow([condition, seed, repr(m.accuracy), repr(m.per_class[0]), repr(m.per_class[1]), m.n_test])
    return buf.getvalue()


# --- persistence -------------------------------------------------------------------

_META = "meta.cnn"


def _encode_arch(arch: CnnArch) -> np.ndarray:
    vals = [*arch.input_shape, arch.class_count, len(arch.conv_blocks)]
    for blk in arch.conv_blocks:
        pool = blk.pool if blk.pool is not None else (0, 0)
        vals += [blk.out_channels, *blk.kernel, *blk.stride, *pool]
    vals += [len(arch.dense_widths), *arch.dense_widths]
    return np.array(vals, dtype=np.float64)


def _decode_arch(v: np.ndarray) -> CnnArch:
    v = [int(a) for a in v]
    input_shape, class_count, n_blocks = tuple(v[0:3]), v[3], v[4]
    pos, blocks = 5, []
    for _ in range(n_blocks):
        out, kh, kw, sh, sw, ph, pw = v[pos : pos + 7]
        blocks.append(ConvBlock(out, (kh, kw), (sh, sw), (ph, pw) if ph else None))
        pos += 7
    n_dense = v[pos]
    return CnnArch(input_shape, tuple(blocks), tuple(v[pos + 1 : pos + 1 + n_dense]), class_count)


def save_classifier(clf: Classifier, path) -> None:
    save_checkpoint({_META: _encode_arch(clf.arch), **clf.params}, path)


def load_classifier(path) -> Classifier:
    raw = load_checkpoint(path)
    if _META not in raw:
        raise ClassifierError(f"{path}: checkpoint has no classifier metadata")
    return Classifier(_decode_arch(raw.pop(_META)), raw)
