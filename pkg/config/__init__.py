"""
Configuration module for the LGE lab.
"""

from config.settings import (
    OUTPUT_ROOT,
    PRECISION,
    DETERMINISTIC,
    ENVIRONMENT,
    get_dtype,
    get_config_summary
)
from config.experiment import (
    ExperimentConfig,
    ConfigError,
    load_config,
    apply_overrides,
    config_hash,
    suite_hash
)

__all__ = [
    "OUTPUT_ROOT",
    "PRECISION",
    "DETERMINISTIC",
    "ENVIRONMENT",
    "get_dtype",
    "get_config_summary",
    "ExperimentConfig",
    "ConfigError",
    "load_config",
    "apply_overrides",
    "config_hash",
    "suite_hash"
]
