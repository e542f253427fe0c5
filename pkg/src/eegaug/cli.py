"""Command-line entry point: ``eegaug <command> [options]``.

Every option can also be given in the key/value config file passed with
``--config`` (``--spec`` for ``synth``); the config key is listed in each
option's help text. Options on the command line override the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cdcgan import generate_labeled, load_generator, save_generator, train_cdcgan
from .classifier import evaluate, load_classifier, metrics_csv, save_classifier, train_classifier
from .data import DataFormatError, Label, Split, load_dataset, save_dataset, synthesize_dataset
from .experiments import ExperimentConfig, render_tfr, run_experiment, write_outputs
from .experiments.config import ConfigError, Preprocess, SynthSettings, _typed, clf_from, gan_config_from
from .experiments.config import parse_range, read_config
from .wavelet import WaveletError, load_tfrs, save_tfrs, trial_to_tfr

log = logging.getLogger("eegaug")

# (flag, config key, help)
_OPTIONS: dict[str, list[tuple[str, str, str]]] = {
    "synth": [
        ("--out", "out", "output dataset path"),
        ("--split", "split", "train or test"),
        ("--seed", "seed", "random seed (defaults to synth.train_seed or synth.test_seed)"),
        ("--format", "data.format", "eegb or csv"),
        ("--trials-per-class", "synth.trials_per_class", "trials of each class"),
        ("--noise-sigma", "synth.noise_sigma", "white noise standard deviation"),
        ("--contrast", "synth.contrast", "fraction of alpha suppressed on the contralateral side"),
        ("--jitter", "synth.amplitude_jitter", "relative per-trial amplitude jitter"),
    ],
    "preprocess": [
        ("--in", "in", "input dataset"),
        ("--out", "out", "output TFR archive"),
        ("--band", "preprocess.band", "frequency band lo:hi in Hz, 1 Hz steps"),
        ("--window", "preprocess.window", "analysis window lo:hi in seconds"),
        ("--tcols", "preprocess.tcols", "number of time columns"),
        ("--format", "data.format", "eegb or csv"),
        ("--split", "split", "train or test tag for the loaded trials"),
    ],
    "train-gan": [
        ("--in", "in", "training TFR archive"),
        ("--out", "out", "generator checkpoint"),
        ("--log", "log", "training log CSV"),
        ("--seed", "gan.seed", "random seed"),
        ("--iterations", "gan.iterations", "outer iterations"),
    ],
    "generate": [
        ("--gan", "gan_checkpoint", "generator checkpoint"),
        ("--label", "label", "left or right"),
        ("--count", "count", "number of samples"),
        ("--seed", "seed", "noise seed"),
        ("--first-id", "first_id", "trial id of the first sample"),
        ("--out", "out", "output TFR archive"),
    ],
    "train-clf": [
        ("--in", "in", "training TFR archives, comma separated"),
        ("--out", "out", "classifier checkpoint"),
        ("--losses", "losses", "per-epoch training loss CSV"),
        ("--seed", "seed", "random seed"),
        ("--epochs", "clf.epochs", "training epochs"),
    ],
    "eval": [
        ("--clf", "clf_checkpoint", "classifier checkpoint"),
        ("--in", "in", "test TFR archive"),
        ("--out", "out", "metrics CSV"),
        ("--condition", "condition", "condition name written to the CSV"),
        ("--seed", "seed", "seed value written to the CSV"),
    ],
    "experiment": [
        ("--out", "output", "output directory"),
        ("--seed", "seed", "run a single seed instead of the configured list"),
    ],
    "render": [
        ("--in", "in", "TFR archive"),
        ("--index", "index", "sample index in the archive"),
        ("--out", "out", "image path ending in .pgm or .svg"),
        ("--scale", "scale", "pixels per cell"),
        ("--channel", "channel", "render only this channel"),
        ("--compare", "compare", "second TFR archive rendered to the right"),
        ("--compare-index", "compare_index", "sample index in the comparison archive"),
    ],
}


class CliError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eegaug", description="EEG time-frequency augmentation with a conditional GAN")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in _OPTIONS.items():
        p = sub.add_parser(name)
        if name == "experiment":
            p.add_argument("kind", choices=["fig3", "fig4", "fig5"])
        cfg_flags = ["--config", "--spec"] if name == "synth" else ["--config"]
        p.add_argument(*cfg_flags, dest="config", help="key/value config file")
        for flag, key, text in opts:
            p.add_argument(flag, dest=key, default=None, help=f"{text} [config: {key}]")
    return parser


def _settings(args: argparse.Namespace) -> dict[str, str]:
    raw = read_config(args.config) if args.config else {}
    for _, key, _ in _OPTIONS[args.command]:
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    return raw


def _require(raw: dict[str, str], key: str) -> str:
    if not raw.get(key):
        raise CliError(f"missing required setting {key!r} (flag or config key)")
    return raw[key]


def _int(raw, key, default=None):
    if key not in raw:
        if default is None:
            _require(raw, key)
        return default
    try:
        return int(raw[key])
    except ValueError:
        raise CliError(f"{key} must be an integer, got {raw[key]!r}") from None


def _preprocess(raw) -> Preprocess:
    kw = {}
    if "preprocess.window" in raw:
        kw["window_s"] = parse_range(raw["preprocess.window"])
    if "preprocess.band" in raw:
        kw["band_hz"] = parse_range(raw["preprocess.band"])
    if "preprocess.tcols" in raw:
        kw["time_columns"] = _int(raw, "preprocess.tcols")
    return Preprocess(**kw)


def _split(raw) -> Split:
    text = raw.get("split", "train").strip().lower()
    try:
        return Split(text)
    except ValueError:
        raise CliError(f"split must be train or test, got {text!r}") from None


# --- commands --------------------------------------------------------------------------


def cmd_synth(raw) -> None:
    settings = _typed(SynthSettings, "synth", raw)
    split = _split(raw)
    default_seed = settings.train_seed if split is Split.TRAIN else settings.test_seed
    ds = synthesize_dataset(settings.spec(), _int(raw, "seed", default_seed), split)
    save_dataset(ds, _require(raw, "out"), raw.get("data.format", "eegb"))


def cmd_preprocess(raw) -> None:
    pre = _preprocess(raw)
    ds = load_dataset(_require(raw, "in"), raw.get("data.format", "eegb"), split=_split(raw))
    tfrs = [trial_to_tfr(t, pre.window_s, pre.freqs_hz, pre.time_columns) for t in ds]
    save_tfrs(tfrs, _require(raw, "out"))


def cmd_train_gan(raw) -> None:
    cfg = gan_config_from(raw)
    g, _, trainlog = train_cdcgan(load_tfrs(_require(raw, "in")), cfg)
    save_generator(g, _require(raw, "out"))
    if raw.get("log"):
        Path(raw["log"]).write_text(trainlog.to_csv())


def cmd_generate(raw) -> None:
    g = load_generator(_require(raw, "gan_checkpoint"))
    label = Label.parse(_require(raw, "label"))
    tfrs = generate_labeled(g, label, _int(raw, "count"), _int(raw, "seed", 0), first_id=_int(raw, "first_id", 0))
    save_tfrs(tfrs, _require(raw, "out"), g.freqs_hz, g.times_s)


def cmd_train_clf(raw) -> None:
    arch, hyper = clf_from(raw)
    samples = []
    for path in _require(raw, "in").split(","):
        samples += load_tfrs(path.strip())
    clf = train_classifier(samples, arch, hyper, _int(raw, "seed", 0))
    save_classifier(clf, _require(raw, "out"))
    if raw.get("losses"):
        lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(clf.epoch_losses)]
        Path(raw["losses"]).write_text("\n".join(lines) + "\n")


def cmd_eval(raw) -> None:
    clf = load_classifier(_require(raw, "clf_checkpoint"))
    m = evaluate(clf, load_tfrs(_require(raw, "in")))
    Path(_require(raw, "out")).write_text(metrics_csv([(raw.get("condition", "eval"), _int(raw, "seed", 0), m)]))


def cmd_experiment(raw, kind: str) -> None:
    cfg = ExperimentConfig.from_mapping(dict(raw, kind=kind))
    result = run_experiment(cfg)
    for p in write_outputs(result, cfg.output_dir):
        log.info("wrote %s", p)


def cmd_render(raw) -> None:
    tfrs = load_tfrs(_require(raw, "in"))
    index = _int(raw, "index", 0)
    if not 0 <= index < len(tfrs):
        raise CliError(f"index {index} outside archive of {len(tfrs)} samples")
    compare = None
    if raw.get("compare"):
        others = load_tfrs(raw["compare"])
        j = _int(raw, "compare_index", 0)
        if not 0 <= j < len(others):
            raise CliError(f"compare index {j} outside archive of {len(others)} samples")
        compare = others[j]
    channel = _int(raw, "channel") if raw.get("channel") else None
    render_tfr(tfrs[index], _require(raw, "out"), scale=_int(raw, "scale", 4), channel=channel, compare=compare)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = _settings(args)
        if args.command == "experiment":
            cmd_experiment(raw, args.kind)
        else:
            handlers = {
                "synth": cmd_synth, "preprocess": cmd_preprocess, "train-gan": cmd_train_gan,
                "generate": cmd_generate, "train-clf": cmd_train_clf, "eval": cmd_eval, "render": cmd_render,
            }
            handlers[args.command](raw)
    except (CliError, ConfigError, DataFormatError, WaveletError, ValueError, OSError) as exc:
        print(f"eegaug {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
