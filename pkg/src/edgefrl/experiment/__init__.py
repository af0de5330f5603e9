"""Configuration, scenario presets, the run loop and metric summaries."""

from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .presets import PRESET_SEEDS, PRESETS, preset, preset_dicts
from .runner import RunArtifacts, RunError, run
from .summary import CSV_COLUMNS, convergence_episode, summarize, summarize_text

__all__ = [
    "ConfigError", "ExperimentConfig", "dump_config", "load_config", "parse_config",
    "PRESET_SEEDS", "PRESETS", "preset", "preset_dicts",
    "RunArtifacts", "RunError", "run",
    "CSV_COLUMNS", "convergence_episode", "summarize", "summarize_text",
]
