"""EEG trials and datasets: file formats, windowing, synthetic fixtures, training-set mixing.

Two on-disk layouts are supported.

Eegb (little-endian binary)::

    "EEGB" | u32 version=1 | u32 n_trials | u32 n_channels | u32 n_samples | f32 sample_rate_hz
    per trial: u32 trial_id | u8 label | n_channels * n_samples f32, channel-major

CSV with header ``trial_id,label,channel,sample_index,value``, one row per sample.

Label codes are 0 = LeftHand, 1 = RightHand in both.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, TypeVar

import numpy as np

DEFAULT_CHANNELS = ("C3", "Cz", "C4")
DEFAULT_SAMPLE_RATE = 128.0

EEGB_MAGIC = b"EEGB"
EEGB_VERSION = 1
_EEGB_HEADER = struct.Struct("<4sIIIIf")
_TRIAL_HEADER = struct.Struct("<IB")
CSV_HEADER = ["trial_id", "label", "channel", "sample_index", "value"]


class Label(enum.IntEnum):
    LEFT_HAND = 0
    RIGHT_HAND = 1

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, str):
            key = value.strip().lower()
            aliases = {"left": cls.LEFT_HAND, "lefthand": cls.LEFT_HAND, "right": cls.RIGHT_HAND,
                       "righthand": cls.RIGHT_HAND}
            if key in aliases:
                return aliases[key]
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise UnknownLabelError(f"unknown label code {value!r}") from None

    @property
    def short(self) -> str:
        return "left" if self is Label.LEFT_HAND else "right"


class Split(enum.Enum):
    TRAIN = "train"
    TEST = "test"


class Provenance(enum.IntEnum):
    RAW = 0
    ARTIFICIAL = 1
    SYNTHETIC = 2


class DataFormatError(ValueError):
    """Base class for problems found while reading a dataset file."""


class MalformedHeaderError(DataFormatError):
    pass


class LengthMismatchError(DataFormatError):
    pass


class UnknownLabelError(DataFormatError):
    pass


class NonFiniteSampleError(DataFormatError):
    pass


class WindowError(ValueError):
    pass


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class EegTrial:
    """One labelled multichannel recording window, samples shaped (channels, T) in microvolts."""

    channels: tuple[str, ...]
    samples: np.ndarray
    sample_rate_hz: float
    label: Label
    trial_id: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError(f"trial {self.trial_id}: samples must be 2-d (channels, T), got {samples.shape}")
        if samples.shape[0] != len(self.channels):
            raise ValueError(
                f"trial {self.trial_id}: {samples.shape[0]} sample rows for {len(self.channels)} channels"
            )
        if samples.shape[1] == 0:
            raise ValueError(f"trial {self.trial_id}: empty recording")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"trial {self.trial_id}: sample rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteSampleError(f"trial {self.trial_id}: non-finite sample value")
        if self.trial_id < 0:
            raise ValueError("trial_id must be non-negative")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class Dataset:
    trials: tuple[EegTrial, ...] = ()
    split: Split = Split.TRAIN
    provenance: Provenance = Provenance.RAW

    def __post_init__(self):
        trials = tuple(self.trials)
        object.__setattr__(self, "trials", trials)
        if not trials:
            return
        first = trials[0]
        ids = set()
        for t in trials:
            if t.sample_rate_hz != first.sample_rate_hz or t.n_samples != first.n_samples:
                raise ValueError(f"trial {t.trial_id}: sample rate / length differs from trial {first.trial_id}")
            if t.channels != first.channels:
                raise ValueError(f"trial {t.trial_id}: channel list differs from trial {first.trial_id}")
            if t.trial_id in ids:
                raise ValueError(f"duplicate trial_id {t.trial_id}")
            ids.add(t.trial_id)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def class_counts(self) -> dict[Label, int]:
        counts = {lab: 0 for lab in Label}
        for t in self.trials:
            counts[t.label] += 1
        return counts


# --- file formats -------------------------------------------------------------


def save_dataset(dataset: Dataset, path, format: str = "eegb") -> None:
    fmt = format.lower()
    if fmt == "eegb":
        _save_eegb(dataset, path)
    elif fmt == "csv":
        _save_csv(dataset, path)
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def load_dataset(
    path,
    format: str = "eegb",
    *,
    split: Split = Split.TRAIN,
    provenance: Provenance = Provenance.RAW,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    channels: Sequence[str] | None = None,
) -> Dataset:
    """Read a dataset; trial order follows the file.

    ``sample_rate_hz`` is only used for CSV, which does not store it.
    ``channels`` names the Eegb rows (default C3, Cz, C4 for three channels).
    """
    fmt = format.lower()
    if fmt == "eegb":
        trials = _load_eegb(Path(path), channels)
    elif fmt == "csv":
        trials = _load_csv(Path(path), sample_rate_hz)
    else:
        raise ValueError(f"unknown dataset format {format!r}")
    return Dataset(tuple(trials), split, provenance)


def _channel_names(n: int, channels: Sequence[str] | None) -> tuple[str, ...]:
    if channels is not None:
        if len(channels) != n:
            raise ValueError(f"{len(channels)} channel names for {n} channels")
        return tuple(channels)
    if n == len(DEFAULT_CHANNELS):
        return DEFAULT_CHANNELS
    return tuple(f"ch{i}" for i in range(n))


def _save_eegb(dataset: Dataset, path) -> None:
    trials = dataset.trials
    n_ch = len(trials[0].channels) if trials else len(DEFAULT_CHANNELS)
    n_s = trials[0].n_samples if trials else 0
    rate = trials[0].sample_rate_hz if trials else DEFAULT_SAMPLE_RATE
    parts = [_EEGB_HEADER.pack(EEGB_MAGIC, EEGB_VERSION, len(trials), n_ch, n_s, rate)]
    for t in trials:
        parts.append(_TRIAL_HEADER.pack(t.trial_id, int(t.label)))
        parts.append(np.ascontiguousarray(t.samples, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def _load_eegb(path: Path, channels) -> list[EegTrial]:
    buf = path.read_bytes()
    if len(buf) < _EEGB_HEADER.size:
        raise MalformedHeaderError(f"{path}: file shorter than the Eegb header")
    magic, version, n_trials, n_ch, n_s, rate = _EEGB_HEADER.unpack_from(buf, 0)
    if magic != EEGB_MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic {magic!r}")
    if version != EEGB_VERSION:
        raise MalformedHeaderError(f"{path}: unsupported version {version}")
    if n_trials and (n_ch == 0 or n_s == 0):
        raise MalformedHeaderError(f"{path}: zero channels or samples with {n_trials} trials")
    if n_trials and not (math.isfinite(rate) and rate > 0):
        raise MalformedHeaderError(f"{path}: invalid sample rate {rate}")
    names = _channel_names(n_ch, channels)
    payload = 4 * n_ch * n_s
    record = _TRIAL_HEADER.size + payload
    expected = _EEGB_HEADER.size + n_trials * record
    pos = _EEGB_HEADER.size
    trials = []
    for i in range(n_trials):
        if pos + _TRIAL_HEADER.size > len(buf):
            raise LengthMismatchError(f"{path}: file ends before trial #{i} header")
        trial_id, code = _TRIAL_HEADER.unpack_from(buf, pos)
        if pos + record > len(buf):
            raise LengthMismatchError(
                f"{path}: trial_id {trial_id} has {(len(buf) - pos - _TRIAL_HEADER.size) // 4} samples, "
                f"expected {n_ch * n_s} ({n_ch} channels x {n_s})"
            )
        label = Label.parse(code)
        samples = np.frombuffer(buf, dtype="<f4", count=n_ch * n_s, offset=pos + _TRIAL_HEADER.size)
        samples = samples.reshape(n_ch, n_s).astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise NonFiniteSampleError(f"{path}: trial_id {trial_id} contains a non-finite sample")
        trials.append(EegTrial(names, samples, float(rate), label, int(trial_id)))
        pos += record
    if len(buf) != expected:
        last = trials[-1].trial_id if trials else None
        raise LengthMismatchError(
            f"{path}: {len(buf) - expected:+d} bytes relative to the header's layout (last trial_id {last})"
        )
    return trials


def _save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t in dataset.trials:
            for name, row in zip(t.channels, t.samples):
                for k, v in enumerate(row):
                    w.writerow([t.trial_id, int(t.label), name, k, repr(float(v))])


def _load_csv(path: Path, sample_rate_hz: float) -> list[EegTrial]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise MalformedHeaderError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        order: list[int] = []
        labels: dict[int, Label] = {}
        values: dict[int, dict[str, dict[int, float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedHeaderError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                tid, idx, value = int(row[0]), int(row[3]), float(row[4])
            except ValueError as exc:
                raise MalformedHeaderError(f"{path}:{lineno}: {exc}") from None
            label = Label.parse(row[1])
            if not math.isfinite(value):
                raise NonFiniteSampleError(f"{path}:{lineno}: trial_id {tid} has non-finite sample")
            if tid not in values:
                order.append(tid)
                labels[tid] = label
                values[tid] = {}
            elif labels[tid] != label:
                raise UnknownLabelError(f"{path}:{lineno}: trial_id {tid} has conflicting labels")
            values[tid].setdefault(row[2].strip(), {})[idx] = value
    trials = []
    for tid in order:
        chans = values[tid]
        lengths = {name: len(v) for name, v in chans.items()}
        if len(set(lengths.values())) != 1:
            raise LengthMismatchError(f"{path}: trial_id {tid} channel lengths differ: {lengths}")
        n = next(iter(lengths.values()))
        for name, v in chans.items():
            if sorted(v) != list(range(n)):
                raise LengthMismatchError(f"{path}: trial_id {tid} channel {name} has gaps in sample_index")
        samples = np.array([[chans[name][k] for k in range(n)] for name in chans])
        trials.append(EegTrial(tuple(chans), samples, sample_rate_hz, labels[tid], tid))
    return trials


# --- windowing ----------------------------------------------------------------


def extract_window(trial: EegTrial, t0_s: float, t1_s: float) -> EegTrial:
    """Samples in the half-open interval [t0_s, t1_s)."""
    if not (0 <= t0_s < t1_s <= trial.duration_s + 1e-9):
        raise WindowError(
            f"window [{t0_s}, {t1_s}) outside recording of {trial.duration_s:g} s (trial_id {trial.trial_id})"
        )
    start = int(round(t0_s * trial.sample_rate_hz))
    length = int(round((t1_s - t0_s) * trial.sample_rate_hz))
    if length < 1 or start + length > trial.n_samples:
        raise WindowError(f"window [{t0_s}, {t1_s}) does not cover whole samples of trial {trial.trial_id}")
    return EegTrial(trial.channels, trial.samples[:, start : start + length], trial.sample_rate_hz,
                    trial.label, trial.trial_id)


def window_dataset(dataset: Dataset, t0_s: float, t1_s: float) -> Dataset:
    return Dataset(tuple(extract_window(t, t0_s, t1_s) for t in dataset), dataset.split, dataset.provenance)


# --- synthetic fixtures -------------------------------------------------------


@dataclass(frozen=True)
class Burst:
    frequency_hz: float
    amplitude: float
    on_interval: tuple[float, float]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a labelled dataset of sinusoidal bursts in white noise.

    Each trial draws a random phase per burst and scales each burst by
    ``1 + amplitude_jitter * N(0, 1)``, so trials of one class differ beyond
    the additive noise.
    """

    trials_per_class: int
    class_signatures: Mapping[Label, Mapping[str, Sequence[Burst]]]
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    duration_s: float = 9.0
    noise_sigma: float = 1.0
    amplitude_jitter: float = 0.0
    channels: tuple[str, ...] = DEFAULT_CHANNELS
    band_hz: tuple[float, float] = (7.0, 15.0)

    def __post_init__(self):
        if self.trials_per_class < 0:
            raise ValueError("trials_per_class must be non-negative")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ValueError("sample rate and duration must be positive")
        if self.noise_sigma < 0 or self.amplitude_jitter < 0:
            raise ValueError("noise_sigma and amplitude_jitter must be non-negative")
        lo, hi = self.band_hz
        for label, per_channel in self.class_signatures.items():
            for chan, bursts in per_channel.items():
                if chan not in self.channels:
                    raise ValueError(f"signature for unknown channel {chan!r}")
                for b in bursts:
                    if not lo <= b.frequency_hz <= hi:
                        raise ValueError(
                            f"{Label(label).name}/{chan}: burst at {b.frequency_hz} Hz outside band {lo}-{hi} Hz"
                        )
                    t0, t1 = b.on_interval
                    if not 0 <= t0 < t1 <= self.duration_s:
                        raise ValueError(f"{Label(label).name}/{chan}: burst interval {b.on_interval} invalid")


def lateralized_alpha_spec(
    trials_per_class: int,
    noise_sigma: float = 1.0,
    contrast: float = 0.5,
    amplitude_jitter: float = 0.3,
) -> SyntheticSpec:
    """Motor-imagery-like fixture: imagined movement suppresses alpha over the opposite hemisphere.

    Both classes carry a 10 Hz and a 12 Hz rhythm on C3 and C4 from 4 s to
    9 s; the contralateral side is attenuated by ``contrast``. Cz carries a
    class-independent 9 Hz rhythm.
    """
    strong, weak = 1.0, 1.0 - contrast
    on = (4.0, 9.0)

    def side(amp):
        return [Burst(10.0, amp, on), Burst(12.0, 0.6 * amp, on)]

    mid = [Burst(9.0, 0.7, on)]
    return SyntheticSpec(
        trials_per_class=trials_per_class,
        class_signatures={
            Label.LEFT_HAND: {"C3": side(strong), "Cz": mid, "C4": side(weak)},
            Label.RIGHT_HAND: {"C3": side(weak), "Cz": mid, "C4": side(strong)},
        },
        noise_sigma=noise_sigma,
        amplitude_jitter=amplitude_jitter,
    )


def synthesize_dataset(spec: SyntheticSpec, seed: int, split: Split = Split.TRAIN) -> Dataset:
    rng = np.random.default_rng(seed)
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    t = np.arange(n) / spec.sample_rate_hz
    trials = []
    tid = 0
    for _ in range(spec.trials_per_class):
        for label in Label:
            x = spec.noise_sigma * rng.standard_normal((len(spec.channels), n))
            per_channel = spec.class_signatures.get(label, {})
            for ci, chan in enumerate(spec.channels):
                for b in per_channel.get(chan, ()):
                    phase = rng.uniform(0, 2 * np.pi)
                    amp = b.amplitude * max(0.0, 1.0 + spec.amplitude_jitter * rng.standard_normal())
                    on = (t >= b.on_interval[0]) & (t < b.on_interval[1])
                    x[ci] += on * amp * np.sin(2 * np.pi * b.frequency_hz * t + phase)
            trials.append(EegTrial(spec.channels, x, spec.sample_rate_hz, label, tid))
            tid += 1
    return Dataset(tuple(trials), split, Provenance.SYNTHETIC)


# --- training-set mixing ------------------------------------------------------

T = TypeVar("T")


def _label_of(sample) -> Label:
    return Label(sample.label)


def mix_counts(raw_fraction: float, artificial_multiple: float, reference_per_class: int) -> tuple[int, int]:
    """Per-class (raw, artificial) counts drawn by :func:`mix_training_set`."""
    # round half up, so 0.5 * 35 gives 18 on every platform
    raw = int(math.floor(raw_fraction * reference_per_class + 0.5 + 1e-9))
    art = int(math.floor(artificial_multiple * reference_per_class + 0.5 + 1e-9))
    return raw, art


def mix_training_set(
    raw: Sequence[T],
    artificial: Sequence[T],
    raw_fraction: float,
    artificial_multiple: float,
    reference_per_class: int,
    seed: int,
) -> list[T]:
    """Draw a labelled training set mixing raw and artificial samples.

    Per class, ``round(raw_fraction * reference_per_class)`` raw and
    ``round(artificial_multiple * reference_per_class)`` artificial samples are
    drawn without replacement; the result is shuffled. Samples only need a
    ``label`` attribute.
    """
    if not 0 <= raw_fraction <= 1:
        raise ValueError("raw_fraction must lie in [0, 1]")
    if artificial_multiple < 0:
        raise ValueError("artificial_multiple must be non-negative")
    if reference_per_class < 1:
        raise ValueError("reference_per_class must be positive")
    n_raw, n_art = mix_counts(raw_fraction, artificial_multiple, reference_per_class)
    rng = np.random.default_rng(seed)
    picked: list[T] = []
    for pool, need, kind in ((raw, n_raw, "raw"), (artificial, n_art, "artificial")):
        by_class: dict[Label, list[T]] = defaultdict(list)
        for s in pool:
            by_class[_label_of(s)].append(s)
        for label in Label:
            have = by_class[label]
            if need > len(have):
                raise InsufficientSamplesError(
                    f"{kind} {label.name}: need {need}, have {len(have)} (short by {need - len(have)})"
                )
            if need:
                idx = rng.choice(len(have), size=need, replace=False)
                picked.extend(have[i] for i in np.sort(idx))
    order = rng.permutation(len(picked))
    return [picked[i] for i in order]


def draw_per_class(samples: Sequence[T], per_class: int, seed: int) -> list[T]:
    """Seeded subset of ``per_class`` samples of each class, original order kept."""
    rng = np.random.default_rng(seed)
    keep = set()
    for label in Label:
        idx = [i for i, s in enumerate(samples) if _label_of(s) == label]
        if per_class > len(idx):
            raise InsufficientSamplesError(
                f"{label.name}: need {per_class}, have {len(idx)} (short by {per_class - len(idx)})"
            )
        keep.update(idx[i] for i in rng.choice(len(idx), size=per_class, replace=False))
    return [s for i, s in enumerate(samples) if i in keep]
