"""Experiment configuration, augmentation protocols and TFR rendering."""

from .config import (
    ConfigError,
    ExperimentConfig,
    ExperimentKind,
    Preprocess,
    SynthSettings,
    parse_config,
    read_config,
)
from .protocols import (
    ExperimentResult,
    ResultRow,
    derive_seed,
    load_tfr_splits,
    run_experiment,
    run_fig3,
    run_fig4,
    run_fig5,
    write_outputs,
)
from .render import RenderError, render_tfr

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentResult",
    "Preprocess",
    "RenderError",
    "ResultRow",
    "SynthSettings",
    "derive_seed",
    "load_tfr_splits",
    "parse_config",
    "read_config",
    "render_tfr",
    "run_experiment",
    "run_fig3",
    "run_fig4",
    "run_fig5",
    "write_outputs",
]
