"""Augmentation experiments: fixed-reference mixtures, added-artificial sweeps and raw-count sweeps.

Per seed, every condition shares the test set and the classifier
initialization; only the training data changes. A generator is trained once
per (seed, raw training subset), so artificial samples only carry
information from the raw trials the condition is allowed to see.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..cdcgan import GeneratorNet, TrainLog, generate_labeled, train_cdcgan
from ..classifier import Metrics, evaluate, init_classifier, metrics_csv, train_classifier
from ..data import Label, Split, draw_per_class, load_dataset, mix_counts, mix_training_set, synthesize_dataset
from ..data import Provenance
from ..wavelet import Tfr, stack, trial_to_tfr
from .config import ConfigError, ExperimentConfig, ExperimentKind

log = logging.getLogger(__name__)

RESULTS_HEADER = ("experiment", "condition", "seed", "n_raw_per_class", "n_art_per_class", "accuracy")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    condition: str
    seed: int
    n_raw_per_class: int
    n_art_per_class: int
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class Fingerprint:
    experiment: str
    condition: str
    seed: int
    test_sha256: str
    init_sha256: str
    train_sha256: str


@dataclass
class ExperimentResult:
    kind: ExperimentKind
    rows: list[ResultRow]
    metrics: list[tuple[str, int, Metrics]]
    fingerprints: list[Fingerprint]
    gan_logs: dict[str, TrainLog]

    def summary(self) -> list[tuple[str, int, float, float]]:
        """(condition, n_seeds, mean, sd) in first-appearance order; sd uses n - 1."""
        order: list[str] = []
        by_cond: dict[str, list[float]] = {}
        for r in self.rows:
            if r.condition not in by_cond:
                order.append(r.condition)
                by_cond[r.condition] = []
            by_cond[r.condition].append(r.accuracy)
        out = []
        for c in order:
            a = np.asarray(by_cond[c])
            sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
            out.append((c, int(a.size), float(a.mean()), sd))
        return out

    def mean_accuracy(self, condition: str) -> float:
        vals = [r.accuracy for r in self.rows if r.condition == condition]
        if not vals:
            raise KeyError(condition)
        return float(np.mean(vals))

    def improvements(self) -> list[tuple[int, int, float, float, float]]:
        """Raw-count sweep only: (n_raw_per_class, seed, raw_only, augmented, augmented - raw_only)."""
        raw = {(r.n_raw_per_class, r.seed): r.accuracy for r in self.rows if r.n_art_per_class == 0}
        out = []
        for r in self.rows:
            if r.n_art_per_class > 0 and (r.n_raw_per_class, r.seed) in raw:
                base = raw[(r.n_raw_per_class, r.seed)]
                out.append((r.n_raw_per_class, r.seed, base, r.accuracy, r.accuracy - base))
        return out

    def mean_improvement(self, n_raw_per_class: int) -> float:
        vals = [d for n, _, _, _, d in self.improvements() if n == n_raw_per_class]
        if not vals:
            raise KeyError(n_raw_per_class)
        return float(np.mean(vals))


# --- inputs -------------------------------------------------------------------------


def derive_seed(seed: int, *tags) -> int:
    """Independent 32-bit seed for one named use of an experiment seed."""
    words = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def load_tfr_splits(cfg: ExperimentConfig) -> tuple[list[Tfr], list[Tfr]]:
    """(train, test) unit-range TFRs from the configured files or the synthetic fixture."""
    cfg.check_paths()
    if cfg.synthetic:
        spec = cfg.synth.spec()
        train = synthesize_dataset(spec, cfg.synth.train_seed, Split.TRAIN)
        test = synthesize_dataset(spec, cfg.synth.test_seed, Split.TEST)
    else:
        train = load_dataset(cfg.train_path, cfg.data_format, split=Split.TRAIN)
        test = load_dataset(cfg.test_path, cfg.data_format, split=Split.TEST)
    pre = cfg.preprocess

    def convert(ds):
        return [trial_to_tfr(t, pre.window_s, pre.freqs_hz, pre.time_columns) for t in ds]

    return convert(train), convert(test)


def sha256_arrays(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _params_hash(params: dict[str, np.ndarray]) -> str:
    return sha256_arrays(*(params[k] for k in sorted(params)))


def _samples_hash(samples: Sequence[Tfr]) -> str:
    x, y = stack(list(samples))
    return sha256_arrays(x, y)


# --- shared steps ----------------------------------------------------------------------


class _Runner:
    def __init__(self, cfg: ExperimentConfig, train: list[Tfr], test: list[Tfr]):
        self.cfg = cfg
        self.train, self.test = train, test
        self.test_hash = _samples_hash(test)
        self.result = ExperimentResult(cfg.kind, [], [], [], {})

    def generator(self, seed: int, raw_subset: Sequence[Tfr], tag: str) -> GeneratorNet:
        gan_cfg = replace(self.cfg.gan, seed=derive_seed(seed, "gan", tag))
        log.info("seed %d: training generator on %s (%d samples)", seed, tag, len(raw_subset))
        g, _, trainlog = train_cdcgan(list(raw_subset), gan_cfg)
        self.result.gan_logs[f"seed{seed}_{tag}"] = trainlog
        return g

    def artificial(self, g: GeneratorNet, seed: int, per_class: int, tag: str) -> list[Tfr]:
        out: list[Tfr] = []
        for label in Label:
            out += generate_labeled(g, label, per_class, derive_seed(seed, "generate", tag, int(label)),
                                    first_id=int(label) * per_class)
        return out

    def evaluate_condition(self, condition: str, seed: int, train: list[Tfr], n_raw: int, n_art: int) -> None:
        cfg = self.cfg
        clf_seed = derive_seed(seed, "classifier")
        clf = train_classifier(train, cfg.clf_arch, cfg.clf_hyper, clf_seed)
        m = evaluate(clf, self.test)
        kind = cfg.kind.value
        self.result.rows.append(ResultRow(kind, condition, seed, n_raw, n_art, m.accuracy))
        self.result.metrics.append((condition, seed, m))
        init = init_classifier(cfg.clf_arch, clf_seed)
        self.result.fingerprints.append(
            Fingerprint(kind, condition, seed, self.test_hash, _params_hash(init.params), _samples_hash(train))
        )
        log.info("%s seed %d %s: accuracy %.4f", kind, seed, condition, m.accuracy)


def _count_check(rows: Sequence[tuple[str, int, int]], raw: int, art: int, label: str) -> None:
    # closed-form bookkeeping must match what was actually drawn
    n_raw = sum(1 for _, prov, lab in rows if prov == Provenance.RAW and lab == 0)
    n_art = sum(1 for _, prov, lab in rows if prov == Provenance.ARTIFICIAL and lab == 0)
    if (n_raw, n_art) != (raw, art):
        raise AssertionError(f"{label}: drew {n_raw}+{n_art} per class, expected {raw}+{art}")


def _mix(raw, art, raw_fraction, multiple, reference, seed, condition) -> tuple[list[Tfr], int, int]:
    n_raw, n_art = mix_counts(raw_fraction, multiple, reference)
    train = mix_training_set(raw, art, raw_fraction, multiple, reference, seed)
    _count_check([(s.trial_id, s.provenance, int(s.label)) for s in train], n_raw, n_art, condition)
    return train, n_raw, n_art


def _fmt(x: float) -> str:
    return f"{x:g}"


# --- protocols --------------------------------------------------------------------------

FIG3_CONDITIONS = ((1.0, 0.0), (0.0, 1.0), (0.5, 0.5), (0.5, 0.0), (0.0, 0.5))


def fig3_condition_label(raw_fraction: float, art_fraction: float) -> str:
    parts = []
    if raw_fraction:
        parts.append(f"{raw_fraction:.1f}raw")
    if art_fraction:
        parts.append(f"{art_fraction:.1f}art")
    return "+".join(parts)


def run_fig3(cfg: ExperimentConfig, data: tuple[list[Tfr], list[Tfr]] | None = None) -> ExperimentResult:
    """Raw, artificial and half/half training sets at a fixed per-class reference size."""
    cfg = replace(cfg, kind=ExperimentKind.FIG3)
    train, test = data if data is not None else load_tfr_splits(cfg)
    run = _Runner(cfg, train, test)
    ref = cfg.reference_per_class
    for seed in cfg.seeds:
        raw = draw_per_class(train, ref, derive_seed(seed, "raw", ref))
        g = run.generator(seed, raw, f"n{ref}")
        art = run.artificial(g, seed, ref, f"n{ref}")
        for raw_fraction, art_fraction in FIG3_CONDITIONS:
            label = fig3_condition_label(raw_fraction, art_fraction)
            mixed, n_raw, n_art = _mix(raw, art, raw_fraction, art_fraction, ref, derive_seed(seed, "mix"), label)
            run.evaluate_condition(label, seed, mixed, n_raw, n_art)
    return run.result


def fig4_condition_label(multiple: float) -> str:
    return "raw" if multiple == 0 else f"raw+{_fmt(multiple)}x"


def run_fig4(cfg: ExperimentConfig, data: tuple[list[Tfr], list[Tfr]] | None = None) -> ExperimentResult:
    """All raw trials plus growing multiples of artificial trials."""
    cfg = replace(cfg, kind=ExperimentKind.FIG4)
    train, test = data if data is not None else load_tfr_splits(cfg)
    run = _Runner(cfg, train, test)
    ref = cfg.reference_per_class
    multiples = (0.0, *cfg.fig4_multiples)
    for seed in cfg.seeds:
        raw = draw_per_class(train, ref, derive_seed(seed, "raw", ref))
        art: list[Tfr] = []
        if cfg.fig4_multiples:
            g = run.generator(seed, raw, f"n{ref}")
            art = run.artificial(g, seed, mix_counts(0, max(cfg.fig4_multiples), ref)[1], f"n{ref}")
        for m in multiples:
            label = fig4_condition_label(m)
            mixed, n_raw, n_art = _mix(raw, art, 1.0, m, ref, derive_seed(seed, "mix"), label)
            run.evaluate_condition(label, seed, mixed, n_raw, n_art)
    return run.result


def fig5_condition_label(n_raw: int, n_art: int) -> str:
    return f"raw{n_raw}" if n_art == 0 else f"raw{n_raw}+art{n_art}"


def run_fig5(cfg: ExperimentConfig, data: tuple[list[Tfr], list[Tfr]] | None = None) -> ExperimentResult:
    """Raw-count sweep, each count with and without a fixed artificial addition."""
    cfg = replace(cfg, kind=ExperimentKind.FIG5)
    train, test = data if data is not None else load_tfr_splits(cfg)
    run = _Runner(cfg, train, test)
    n_add = cfg.fig5_artificial_per_class
    for seed in cfg.seeds:
        for n in cfg.fig5_counts:
            raw = draw_per_class(train, n, derive_seed(seed, "raw", n))
            g = run.generator(seed, raw, f"n{n}")
            art = run.artificial(g, seed, n_add, f"n{n}")
            for add in (0, n_add):
                label = fig5_condition_label(n, add)
                mixed, n_raw, n_art = _mix(raw, art, 1.0, add / n, n, derive_seed(seed, "mix", n), label)
                run.evaluate_condition(label, seed, mixed, n_raw, n_art)
    return run.result


def run_experiment(cfg: ExperimentConfig, data=None) -> ExperimentResult:
    runners = {ExperimentKind.FIG3: run_fig3, ExperimentKind.FIG4: run_fig4, ExperimentKind.FIG5: run_fig5}
    if cfg.kind not in runners:
        raise ConfigError(f"{cfg.kind.value} is not an experiment protocol")
    return runners[cfg.kind](cfg, data)


# --- outputs ------------------------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def results_csv(result: ExperimentResult) -> str:
    return _csv(RESULTS_HEADER, [
        (r.experiment, r.condition, r.seed, r.n_raw_per_class, r.n_art_per_class, repr(r.accuracy))
        for r in result.rows
    ])


def summary_csv(result: ExperimentResult) -> str:
    return _csv(("experiment", "condition", "n_seeds", "mean_accuracy", "sd_accuracy"), [
        (result.kind.value, c, n, repr(mean), repr(sd)) for c, n, mean, sd in result.summary()
    ])


def fingerprints_csv(result: ExperimentResult) -> str:
    return _csv(("experiment", "condition", "seed", "test_sha256", "init_sha256", "train_sha256"), [
        (f.experiment, f.condition, f.seed, f.test_sha256, f.init_sha256, f.train_sha256)
        for f in result.fingerprints
    ])


def improvements_csv(result: ExperimentResult) -> str:
    rows = [(n, s, repr(a), repr(b), repr(d)) for n, s, a, b, d in result.improvements()]
    return _csv(("n_raw_per_class", "seed", "raw_only", "augmented", "improvement"), rows)


def write_outputs(result: ExperimentResult, out_dir) -> list[Path]:
    """Write the result tables (and generator logs) under ``out_dir``; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": results_csv(result),
        "summary.csv": summary_csv(result),
        "metrics.csv": metrics_csv(result.metrics),
        "fingerprints.csv": fingerprints_csv(result),
    }
    if result.kind is ExperimentKind.FIG5:
        files["improvements.csv"] = improvements_csv(result)
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        written.append(p)
    if result.gan_logs:
        logs = out / "gan_logs"
        logs.mkdir(exist_ok=True)
        for tag, trainlog in sorted(result.gan_logs.items()):
            p = logs / f"{tag}.csv"
            p.write_text(trainlog.to_csv())
            written.append(p)
    return written
