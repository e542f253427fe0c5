"""Plain-text key/value configuration for experiments and CLI commands.

A config document holds one ``key = value`` pair per line; ``#`` starts a
comment. Keys are flat, with dotted prefixes grouping related settings::

    kind = fig3
    seeds = 0,1,2,3,4
    synth.noise_sigma = 3.0
    gan.iterations = 1500
    clf.epochs = 60
"""

from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from ..cdcgan import GanConfig, GLossMode
from ..classifier import CnnArch, ConvBlock, TrainHyper
from ..data import SyntheticSpec, lateralized_alpha_spec


class ConfigError(ValueError):
    pass


class ExperimentKind(enum.Enum):
    FIG3 = "fig3"
    FIG4 = "fig4"
    FIG5 = "fig5"
    TRAIN_GAN = "train_gan"
    RENDER_TFR = "render_tfr"


def read_config(path) -> dict[str, str]:
    """Parse a key/value document into a flat ``{key: raw string}`` mapping."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())


def parse_config(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = str  # keep key case
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return dict(parser["config"])


# --- value parsers ---------------------------------------------------------------


def parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def parse_range(text: str) -> tuple[float, float]:
    """``"4:9"`` to ``(4.0, 9.0)``."""
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"expected lo:hi, got {text!r}") from None
    if not hi > lo:
        raise ConfigError(f"empty range {text!r}")
    return lo, hi


def parse_pair(text: str) -> tuple[int, int]:
    """``"3x5"`` to ``(3, 5)``."""
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"expected AxB, got {text!r}") from None
    return a, b


def _typed(cls, prefix: str, raw: Mapping[str, str], converters: Mapping[str, object] | None = None):
    """Build ``cls`` from ``prefix.<field>`` keys, converting by the field's default type."""
    converters = converters or {}
    kwargs = {}
    base = cls()
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in raw:
            continue
        text = raw[key]
        if f.name in converters:
            kwargs[f.name] = converters[f.name](text)
            continue
        default = getattr(base, f.name)
        try:
            if isinstance(default, bool):
                kwargs[f.name] = text.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[f.name] = int(text)
            elif isinstance(default, float):
                kwargs[f.name] = float(text)
            elif isinstance(default, enum.Enum):
                kwargs[f.name] = type(default)(text)
            else:
                kwargs[f.name] = text
        except ValueError:
            raise ConfigError(f"bad value for {key}: {text!r}") from None
    try:
        return replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {prefix} settings: {exc}") from None


# --- typed sections ----------------------------------------------------------------


@dataclass(frozen=True)
class SynthSettings:
    trials_per_class: int = 70
    noise_sigma: float = 3.0
    contrast: float = 0.5
    amplitude_jitter: float = 0.3
    train_seed: int = 100
    test_seed: int = 101

    def spec(self) -> SyntheticSpec:
        return lateralized_alpha_spec(self.trials_per_class, self.noise_sigma, self.contrast, self.amplitude_jitter)


@dataclass(frozen=True)
class Preprocess:
    window_s: tuple[float, float] = (4.0, 9.0)
    band_hz: tuple[float, float] = (7.0, 15.0)
    time_columns: int = 64

    @property
    def freqs_hz(self):
        lo, hi = self.band_hz
        return tuple(float(f) for f in range(int(round(lo)), int(round(hi)) + 1))


def gan_config_from(raw: Mapping[str, str]) -> GanConfig:
    return _typed(GanConfig, "gan", raw, {
        "g_loss_mode": lambda t: GLossMode(t.lower().replace("-", "_")),
        "tfr_shape": lambda t: tuple(int(v) for v in t.split(",")),
    })


def clf_from(raw: Mapping[str, str]) -> tuple[CnnArch, TrainHyper]:
    hyper = _typed(TrainHyper, "clf", raw)
    channels = parse_int_list(raw.get("clf.channels", "16,32"))
    kernel = parse_pair(raw.get("clf.kernel", "3x5"))
    pool = parse_pair(raw.get("clf.pool", "1x2"))
    dense = parse_int_list(raw.get("clf.dense", "64"))
    try:
        arch = CnnArch(conv_blocks=tuple(ConvBlock(c, kernel, (1, 1), pool) for c in channels), dense_widths=dense)
    except ValueError as exc:
        raise ConfigError(f"invalid classifier architecture: {exc}") from None
    return arch, hyper


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind = ExperimentKind.FIG3
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: Path = Path("results")
    train_path: Path | None = None  # None selects the synthetic dataset
    test_path: Path | None = None
    data_format: str = "eegb"
    synth: SynthSettings = field(default_factory=SynthSettings)
    preprocess: Preprocess = field(default_factory=Preprocess)
    gan: GanConfig = field(default_factory=GanConfig)
    clf_arch: CnnArch = field(default_factory=CnnArch)
    clf_hyper: TrainHyper = field(default_factory=TrainHyper)
    reference_per_class: int = 70
    fig4_multiples: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0)
    fig5_counts: tuple[int, ...] = (10, 20, 30, 40, 50, 60, 70)
    fig5_artificial_per_class: int = 70

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.reference_per_class < 1:
            raise ConfigError("reference_per_class must be positive")
        if any(m < 0 for m in self.fig4_multiples):
            raise ConfigError("fig4 multiples must be non-negative")
        if any(c < 1 for c in self.fig5_counts):
            raise ConfigError(f"fig5 counts must be positive, got {self.fig5_counts}")
        if self.fig5_artificial_per_class < 0:
            raise ConfigError("fig5 artificial_per_class must be non-negative")
        if (self.train_path is None) != (self.test_path is None):
            raise ConfigError("data.train and data.test must be given together")
        if self.data_format not in ("eegb", "csv"):
            raise ConfigError(f"unknown data format {self.data_format!r}")

    @property
    def synthetic(self) -> bool:
        return self.train_path is None

    def check_paths(self) -> None:
        """Referenced input files must exist when a run starts."""
        for p in (self.train_path, self.test_path):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"data file not found: {p}")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, str]) -> "ExperimentConfig":
        known_prefixes = ("synth.", "preprocess.", "gan.", "clf.", "fig4.", "fig5.", "data.", "render.")
        known = {"kind", "seeds", "seed", "output", "reference_per_class"}
        for key in raw:
            if key not in known and not key.startswith(known_prefixes):
                raise ConfigError(f"unknown config key {key!r}")
        kw: dict = {}
        if "kind" in raw:
            try:
                kw["kind"] = ExperimentKind(raw["kind"].strip().lower().replace("-", "_"))
            except ValueError:
                raise ConfigError(f"unknown experiment kind {raw['kind']!r}") from None
        if "seed" in raw:
            kw["seeds"] = parse_int_list(raw["seed"])
        elif "seeds" in raw:
            kw["seeds"] = parse_int_list(raw["seeds"])
        if "output" in raw:
            kw["output_dir"] = Path(raw["output"])
        if "data.train" in raw:
            kw["train_path"] = Path(raw["data.train"])
        if "data.test" in raw:
            kw["test_path"] = Path(raw["data.test"])
        if "data.format" in raw:
            kw["data_format"] = raw["data.format"].strip().lower()
        if "reference_per_class" in raw:
            kw["reference_per_class"] = int(raw["reference_per_class"])
        kw["synth"] = _typed(SynthSettings, "synth", raw)
        pre = {}
        if "preprocess.window" in raw:
            pre["window_s"] = parse_range(raw["preprocess.window"])
        if "preprocess.band" in raw:
            pre["band_hz"] = parse_range(raw["preprocess.band"])
        if "preprocess.tcols" in raw:
            pre["time_columns"] = int(raw["preprocess.tcols"])
        kw["preprocess"] = Preprocess(**pre)
        kw["gan"] = gan_config_from(raw)
        kw["clf_arch"], kw["clf_hyper"] = clf_from(raw)
        if "fig4.multiples" in raw:
            kw["fig4_multiples"] = parse_float_list(raw["fig4.multiples"])
        if "fig5.counts" in raw:
            kw["fig5_counts"] = parse_int_list(raw["fig5.counts"])
        if "fig5.artificial_per_class" in raw:
            kw["fig5_artificial_per_class"] = int(raw["fig5.artificial_per_class"])
        return cls(**kw)

    @classmethod
    def from_file(cls, path, overrides: Mapping[str, str] | None = None) -> "ExperimentConfig":
        raw = read_config(path)
        raw.update(overrides or {})
        return cls.from_mapping(raw)
