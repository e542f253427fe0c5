"""Conditional DCGAN over labelled, unit-range TFRs.

The generator sees ``[z, one_hot(y)]``; the discriminator sees the TFR with
one constant plane per class appended along the channel axis (ones in the
plane of the sample's class). Losses::

    loss_d = -[log D(x|y) + log(1 - D(G(z|y)|y))]
    loss_g = mean log(1 - D(G(z|y)|y))     # saturating, the literal minimax form
    loss_g = -mean log D(G(z|y)|y)         # non-saturating (default)

Each outer iteration makes ``d_steps_per_g_step`` discriminator updates,
each on a fresh real and a fresh fake minibatch, then one generator update.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Label, Provenance
from .numerics import (
    AdamState,
    Tape,
    Tensor,
    adam_step,
    add,
    bce_logits,
    concat,
    load_checkpoint,
    reshape,
    save_checkpoint,
    scale,
)
from .numerics.layers import Act, Conv, ConvTranspose, Dense, Flatten, Layer, Reshape, forward, init_params
from .numerics.ops import Activation
from .wavelet import Normalization, Tfr, as_arrays

log = logging.getLogger(__name__)

STANDARD_SHAPE = (3, 9, 64)


class GLossMode(enum.Enum):
    SATURATING = "saturating"
    NON_SATURATING = "non_saturating"


class GanTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 100
    class_count: int = 2
    tfr_shape: tuple[int, int, int] = STANDARD_SHAPE
    d_steps_per_g_step: int = 2
    batch_size: int = 16
    iterations: int = 5000
    g_lr: float = 2e-4
    d_lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    g_loss_mode: GLossMode = GLossMode.NON_SATURATING
    seed: int = 0
    arch: str = "auto"  # "conv", "dense" or "auto" (conv for the 3x9x64 grid)
    hidden: int = 64  # width of the dense architecture
    width: int = 32  # conv architecture: G uses 2w then w channels, D uses w then 2w
    probe_size: int = 16

    def __post_init__(self):
        if self.d_steps_per_g_step < 1:
            raise ValueError("d_steps_per_g_step must be >= 1")
        if self.noise_dim < 1 or self.class_count < 1:
            raise ValueError("noise_dim and class_count must be >= 1")
        if len(self.tfr_shape) != 3 or min(self.tfr_shape) < 1:
            raise ValueError(f"tfr_shape must be three positive extents, got {self.tfr_shape}")
        if self.batch_size < 1 or self.iterations < 0 or self.probe_size < 1:
            raise ValueError("batch_size and probe_size must be positive, iterations non-negative")
        if self.hidden < 1 or self.width < 1:
            raise ValueError("hidden and width must be positive")
        if self.arch not in ("auto", "conv", "dense"):
            raise ValueError(f"unknown GAN architecture {self.arch!r}")
        if self.resolved_arch == "conv" and tuple(self.tfr_shape) != STANDARD_SHAPE:
            raise ValueError(f"the conv architecture is laid out for {STANDARD_SHAPE} inputs")

    @property
    def resolved_arch(self) -> str:
        if self.arch != "auto":
            return self.arch
        return "conv" if tuple(self.tfr_shape) == STANDARD_SHAPE else "dense"


# --- architectures --------------------------------------------------------------


def generator_layers(cfg: GanConfig) -> list[Layer]:
    c, f, t = cfg.tfr_shape
    n_in = cfg.noise_dim + cfg.class_count
    if cfg.resolved_arch == "dense":
        return [
            Dense("g.fc1", n_in, cfg.hidden),
            Act(Activation.RELU),
            Dense("g.fc2", cfg.hidden, c * f * t),
            Act(Activation.TANH),
            Reshape((c, f, t)),
        ]
    # [2w, 3, 8] -> (k 3x4, s 1x2, p 0x1) -> [w, 5, 16] -> (k 5x4, s 1x4) -> [3, 9, 64]
    w = cfg.width
    return [
        Dense("g.fc", n_in, 2 * w * 3 * 8),
        Reshape((2 * w, 3, 8)),
        Act(Activation.RELU),
        ConvTranspose("g.up1", 2 * w, w, (3, 4), (1, 2), (0, 1)),
        Act(Activation.RELU),
        ConvTranspose("g.up2", w, c, (5, 4), (1, 4), (0, 0)),
        Act(Activation.TANH),
    ]


def discriminator_layers(cfg: GanConfig) -> list[Layer]:
    c, f, t = cfg.tfr_shape
    c_in = c + cfg.class_count
    if cfg.resolved_arch == "dense":
        return [
            Flatten(),
            Dense("d.fc1", c_in * f * t, cfg.hidden),
            Act(Activation.LEAKY_RELU, 0.2),
            Dense("d.fc2", cfg.hidden, 1),
        ]
    # [5, 9, 64] -> (k 3x4, s 1x2, p 1x1) -> [w, 9, 32] -> same -> [2w, 9, 16] -> 1 logit
    w = cfg.width
    return [
        Conv("d.c1", c_in, w, (3, 4), (1, 2), (1, 1)),
        Act(Activation.LEAKY_RELU, 0.2),
        Conv("d.c2", w, 2 * w, (3, 4), (1, 2), (1, 1)),
        Act(Activation.LEAKY_RELU, 0.2),
        Flatten(),
        Dense("d.fc", 2 * w * 9 * 16, 1),
    ]


@dataclass(frozen=True)
class GeneratorNet:
    config: GanConfig
    params: dict[str, np.ndarray]
    freqs_hz: np.ndarray | None = None
    times_s: np.ndarray | None = None

    @property
    def layers(self) -> list[Layer]:
        return generator_layers(self.config)


@dataclass(frozen=True)
class DiscriminatorNet:
    config: GanConfig
    params: dict[str, np.ndarray]

    @property
    def layers(self) -> list[Layer]:
        return discriminator_layers(self.config)


def init_networks(cfg: GanConfig) -> tuple[GeneratorNet, DiscriminatorNet]:
    g_seq, d_seq, _ = np.random.SeedSequence(cfg.seed).spawn(3)
    g = GeneratorNet(cfg, init_params(generator_layers(cfg), np.random.default_rng(g_seq)))
    d = DiscriminatorNet(cfg, init_params(discriminator_layers(cfg), np.random.default_rng(d_seq)))
    return g, d


def _check_labels(labels, class_count: int, batch: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size != batch:
        raise ValueError(f"{y.size} labels for a batch of {batch}")
    if np.any((y < 0) | (y >= class_count)):
        raise ValueError(f"labels must lie in [0, {class_count})")
    return y


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def generator_forward(z, labels, g: GeneratorNet, params=None) -> Tensor:
    """G(z|y): [batch, noise_dim] noise and labels to [batch, C, F, T] values in (-1, 1)."""
    cfg = g.config
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.data.ndim != 2 or z.shape[1] != cfg.noise_dim:
        raise ValueError(f"noise must be [batch, {cfg.noise_dim}], got {z.shape}")
    y = _check_labels(labels, cfg.class_count, z.shape[0])
    h = concat([z, Tensor(one_hot(y, cfg.class_count))], axis=1)
    return forward(g.layers, g.params if params is None else params, h)


def label_planes(labels: np.ndarray, k: int, spatial: tuple[int, int]) -> np.ndarray:
    planes = np.zeros((labels.size, k, *spatial))
    planes[np.arange(labels.size), labels] = 1.0
    return planes


def discriminator_forward(x, labels, d: DiscriminatorNet, params=None) -> Tensor:
    """D(x|y) as one logit per sample, shape [batch]."""
    cfg = d.config
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[1:] != tuple(cfg.tfr_shape):
        raise ValueError(f"discriminator expects [batch, {cfg.tfr_shape}], got {x.shape}")
    y = _check_labels(labels, cfg.class_count, x.shape[0])
    h = concat([x, Tensor(label_planes(y, cfg.class_count, x.shape[2:]))], axis=1)
    out = forward(d.layers, d.params if params is None else params, h)
    return reshape(out, (x.shape[0],))


def gan_losses(d_real_logits, d_fake_logits, mode: GLossMode = GLossMode.NON_SATURATING) -> tuple[Tensor, Tensor]:
    """(loss_d, loss_g) for the conditional minimax game."""
    real = d_real_logits if isinstance(d_real_logits, Tensor) else Tensor(d_real_logits)
    fake = d_fake_logits if isinstance(d_fake_logits, Tensor) else Tensor(d_fake_logits)
    loss_d = add(bce_logits(real, np.ones(real.size)), bce_logits(fake, np.zeros(fake.size)))
    if mode is GLossMode.SATURATING:
        # mean log(1 - sigmoid(l)) == -bce(l, 0)
        loss_g = scale(bce_logits(fake, np.zeros(fake.size)), -1.0)
    else:
        loss_g = bce_logits(fake, np.ones(fake.size))
    return loss_d, loss_g


# --- training --------------------------------------------------------------------


@dataclass
class TrainLog:
    iteration: list[int] = field(default_factory=list)
    d_loss: list[float] = field(default_factory=list)
    g_loss: list[float] = field(default_factory=list)
    d_accuracy: list[float] = field(default_factory=list)
    d_updates: int = 0
    g_updates: int = 0

    def __len__(self) -> int:
        return len(self.iteration)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "d_loss", "g_loss", "d_accuracy"])
        for row in zip(self.iteration, self.d_loss, self.g_loss, self.d_accuracy):
            w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
        return buf.getvalue()


def _minibatch(rng, n: int, size: int) -> np.ndarray:
    return rng.choice(n, size=size, replace=n < size)


def train_cdcgan(samples, config: GanConfig) -> tuple[GeneratorNet, DiscriminatorNet, TrainLog]:
    """Adversarial training on labelled unit-range TFRs (list of :class:`Tfr` or ``(x, y)`` arrays).

    Deterministic for a fixed ``config.seed``. The discriminator accuracy in
    the log is measured after each iteration's updates on a fixed probe of
    ``probe_size`` training samples plus as many fresh fakes (threshold 0.5).
    """
    x, y = as_arrays(samples)
    cfg = config
    if x.shape[1:] != tuple(cfg.tfr_shape):
        raise ValueError(f"samples have shape {x.shape[1:]}, config expects {cfg.tfr_shape}")
    for k in range(cfg.class_count):
        if not np.any(y == k):
            raise GanTrainingError(f"class {k} has no training samples")
    if np.any(np.abs(x) > 1):
        raise ValueError("training samples must lie in [-1, 1]")

    g, d = init_networks(cfg)
    freqs = times = None
    if not isinstance(samples, tuple) and samples:
        freqs, times = samples[0].freqs_hz, samples[0].times_s
    g_params, d_params = dict(g.params), dict(d.params)
    g_opt = AdamState(lr=cfg.g_lr, beta1=cfg.beta1, beta2=cfg.beta2)
    d_opt = AdamState(lr=cfg.d_lr, beta1=cfg.beta1, beta2=cfg.beta2)
    _, _, train_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    rng = np.random.default_rng(train_seq)
    probe_idx = _minibatch(rng, len(x), cfg.probe_size)
    probe_x, probe_y = x[probe_idx], y[probe_idx]
    trainlog = TrainLog()
    bsz, k = cfg.batch_size, cfg.class_count

    def fakes(n, params):
        z = rng.standard_normal((n, cfg.noise_dim))
        labels = rng.integers(0, k, size=n)
        return generator_forward(z, labels, g, params).data, labels, z

    for it in range(cfg.iterations):
        d_losses = []
        for _ in range(cfg.d_steps_per_g_step):
            idx = _minibatch(rng, len(x), bsz)
            fake_x, fake_y, _ = fakes(bsz, g_params)
            tp = {name: Tensor(v) for name, v in d_params.items()}
            with Tape() as tape:
                tape.watch(tp)
                real_logits = discriminator_forward(x[idx], y[idx], d, tp)
                fake_logits = discriminator_forward(fake_x, fake_y, d, tp)
                loss_d, _ = gan_losses(real_logits, fake_logits, cfg.g_loss_mode)
            grads = tape.backward(loss_d)
            d_params, d_opt = adam_step(d_params, grads, d_opt)
            trainlog.d_updates += 1
            d_losses.append(loss_d.item())

        z = rng.standard_normal((bsz, cfg.noise_dim))
        labels = rng.integers(0, k, size=bsz)
        tp = {name: Tensor(v) for name, v in g_params.items()}
        with Tape() as tape:
            tape.watch(tp)
            fake = generator_forward(z, labels, g, tp)
            fake_logits = discriminator_forward(fake, labels, d, d_params)
            _, loss_g = gan_losses(np.zeros(bsz), fake_logits, cfg.g_loss_mode)
        grads = tape.backward(loss_g)
        g_params, g_opt = adam_step(g_params, grads, g_opt)
        trainlog.g_updates += 1

        fake_x, fake_y, _ = fakes(cfg.probe_size, g_params)
        real_pred = discriminator_forward(probe_x, probe_y, d, d_params).data > 0
        fake_pred = discriminator_forward(fake_x, fake_y, d, d_params).data > 0
        acc = (real_pred.sum() + (~fake_pred).sum()) / (2 * cfg.probe_size)

        d_loss, g_loss = float(np.mean(d_losses)), loss_g.item()
        if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
            raise GanTrainingError(f"non-finite loss at iteration {it}: d_loss={d_loss}, g_loss={g_loss}")
        trainlog.iteration.append(it)
        trainlog.d_loss.append(d_loss)
        trainlog.g_loss.append(g_loss)
        trainlog.d_accuracy.append(float(acc))
        if (it + 1) % 500 == 0:
            log.info("iteration %d: d_loss %.4f g_loss %.4f d_acc %.3f", it + 1, d_loss, g_loss, acc)

    return (
        GeneratorNet(cfg, g_params, freqs, times),
        DiscriminatorNet(cfg, d_params),
        trainlog,
    )


def generate_labeled(
    g: GeneratorNet,
    label,
    count: int,
    seed: int,
    *,
    first_id: int = 0,
    batch: int = 256,
) -> list[Tfr]:
    """``count`` artificial TFRs of class ``label`` from standard-normal noise."""
    if count < 0:
        raise ValueError("count must be non-negative")
    cfg = g.config
    lab = int(label)
    if not 0 <= lab < cfg.class_count:
        raise ValueError(f"label {label!r} outside [0, {cfg.class_count})")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, cfg.noise_dim))
    c, f, t = cfg.tfr_shape
    freqs = g.freqs_hz if g.freqs_hz is not None else np.arange(f, dtype=np.float64)
    times = g.times_s if g.times_s is not None else np.arange(t, dtype=np.float64)
    out: list[Tfr] = []
    for start in range(0, count, batch):
        zb = z[start : start + batch]
        values = generator_forward(zb, np.full(len(zb), lab), g).data
        for i, v in enumerate(values):
            out.append(
                Tfr(freqs, times, v, Label(lab), first_id + start + i, Normalization.UNIT_RANGE,
                    Provenance.ARTIFICIAL, norm_min=0.0, norm_span=0.0)
            )
    return out


# --- persistence -------------------------------------------------------------------

_META = "meta.gan"


def save_generator(g: GeneratorNet, path) -> None:
    cfg = g.config
    meta = {
        _META: np.array([cfg.noise_dim, cfg.class_count, *cfg.tfr_shape, cfg.resolved_arch == "conv", cfg.hidden,
                              cfg.width],
                        dtype=np.float64),
    }
    if g.freqs_hz is not None:
        meta["meta.freqs_hz"] = np.asarray(g.freqs_hz)
    if g.times_s is not None:
        meta["meta.times_s"] = np.asarray(g.times_s)
    save_checkpoint({**meta, **g.params}, path)


def load_generator(path) -> GeneratorNet:
    raw = load_checkpoint(path)
    if _META not in raw:
        raise ValueError(f"{path}: checkpoint has no generator metadata")
    m = raw.pop(_META).astype(int)
    cfg = GanConfig(noise_dim=int(m[0]), class_count=int(m[1]), tfr_shape=tuple(int(v) for v in m[2:5]),
                    arch="conv" if m[5] else "dense", hidden=int(m[6]), width=int(m[7]))
    freqs = raw.pop("meta.freqs_hz", None)
    times = raw.pop("meta.times_s", None)
    return GeneratorNet(cfg, raw, freqs, times)


def tfrs_from_arrays(x: np.ndarray, labels: Sequence[int], provenance: Provenance = Provenance.RAW) -> list[Tfr]:
    """Wrap raw arrays [N, C, F, T] in unit-range :class:`Tfr` objects with index axes."""
    _, _, f, t = x.shape
    freqs, times = np.arange(f, dtype=np.float64), np.arange(t, dtype=np.float64)
    return [
        Tfr(freqs, times, v, Label(int(lab)), i, Normalization.UNIT_RANGE, provenance)
        for i, (v, lab) in enumerate(zip(x, labels))
    ]
