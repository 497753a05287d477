"""Experiment runner behind the ``croms`` command."""

from .config import ConfigError, ExperimentConfig, parse_config, render_config, validate_config
from .presets import PRESETS, get_preset, list_presets
from .runner import replication_seed, run_replication, run_rows, splitmix64, summarize

__all__ = [
    "ConfigError", "ExperimentConfig", "PRESETS", "get_preset", "list_presets", "parse_config",
    "render_config", "replication_seed", "run_replication", "run_rows", "splitmix64", "summarize",
    "validate_config",
]
