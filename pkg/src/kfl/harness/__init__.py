"""Configuration, dataset sources, the experiment loop and metrics output."""

from .config import (ConfigError, ExperimentConfig, dump_config, load_config,
                     parse_config)
from .datasets import gen_synthetic, load_mnist
from .metrics import HEADER, MetricsRecord, emit_metrics, format_metrics, read_metrics
from .runner import (ExperimentResult, Population, RoundError, build_population,
                     run_experiment)

__all__ = [
    "ConfigError", "ExperimentConfig", "dump_config", "load_config", "parse_config",
    "gen_synthetic", "load_mnist", "HEADER", "MetricsRecord", "emit_metrics",
    "format_metrics", "read_metrics", "ExperimentResult", "Population", "RoundError",
    "build_population", "run_experiment",
]
