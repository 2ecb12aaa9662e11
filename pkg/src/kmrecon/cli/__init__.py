"""Command-line surface, configuration, and checkpoint persistence."""

from .checkpoint import (
    CheckpointError,
    FORMAT_VERSION,
    load_checkpoint,
    restore_params,
    save_checkpoint,
)
from .config import (
    CONFIG_SCHEMA,
    ConfigError,
    RunConfig,
    load_config,
    parse_config_text,
    render_config,
)
from .main import build_tasks, cmd_gen_data, load_dataset, main

__all__ = [
    "CONFIG_SCHEMA",
    "CheckpointError",
    "ConfigError",
    "FORMAT_VERSION",
    "RunConfig",
    "build_tasks",
    "cmd_gen_data",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "main",
    "parse_config_text",
    "render_config",
    "restore_params",
    "save_checkpoint",
]
