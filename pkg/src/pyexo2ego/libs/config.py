#!/usr/bin/env python3
"""
PYEXO2EGO: Parallel GAN for exocentric to egocentric view generation,
with synthetic paired-view data and a full evaluation metric suite.

This module loads run configurations: one JSON document holding the
dataset path, the output directory, the training configuration and the
metric options. Unknown keys are rejected (with a suggestion for likely
typos) and the effective configuration is written next to the run
outputs.

Copyright 2024 © Thierry Thiers <webcoder31@gmail.com>
License: CeCILL-C (http://www.cecill.info)
Repository: https://github.com/webcoder31/pyexo2ego
"""

# Python core modules
from dataclasses import asdict, dataclass, field
import json
import os
from pathlib import Path
from typing import Any, Union

# pyexo2ego libs
from pyexo2ego.libs.exceptions import AppBaseException, ConfigException
from pyexo2ego.libs.logger import logger
from pyexo2ego.libs.metrics import MetricsOptions
from pyexo2ego.libs.synthdata import read_manifest
from pyexo2ego.libs.trainer import TrainConfig
from pyexo2ego.libs.utils import dataclass_from_mapping, echo_settings

# ------------------------
# Constants
# ------------------------

WORKSPACE_ENV = "PYEXO2EGO_WORKSPACE"
DEFAULT_WORKSPACE = Path.home() / "pyexo2ego"
EFFECTIVE_CONFIG_NAME = "effective_config.json"

# ------------------------
# Run Configuration
# ------------------------

@dataclass
class RunConfig:
    """
    One training or ablation run.

    Attributes:
        dataset (str): Dataset directory (required)
        output_dir (str): Run directory
        classifier (str): Scene classifier file used for evaluation; empty
            means train one into the run directory when needed
        train (TrainConfig): Training configuration
        metrics (MetricsOptions): Evaluation options
    """

    dataset: str
    output_dir: str = "runs/pgan"
    classifier: str = ""
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsOptions = field(default_factory=MetricsOptions)


    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def workspace_path() -> Path:
    """
    Directory of the log file: $PYEXO2EGO_WORKSPACE or ~/pyexo2ego.
    """

    return Path(os.environ.get(WORKSPACE_ENV) or DEFAULT_WORKSPACE).expanduser()


def parse_run_config(data: Any) -> RunConfig:
    """
    Build and validate a RunConfig from a JSON mapping.

    The dataset must exist and its resolution must suit the network
    depth.

    Raises:
        ConfigException: Naming the offending key or path
    """

    if isinstance(data, dict) and "dataset" not in data:
        raise ConfigException("Config key 'dataset' is required")
    config = dataclass_from_mapping(RunConfig, data)

    try:
        config.train.validate()
        config.metrics.validate()
    except AppBaseException as exc:
        raise ConfigException(f"Invalid configuration: {exc}") from exc

    dataset = Path(config.dataset)
    if not dataset.is_dir():
        raise ConfigException(f"Dataset directory not found: '{dataset}'")
    try:
        manifest = read_manifest(dataset)
        config.train.network_config().check_side(manifest.resolution)
    except AppBaseException as exc:
        raise ConfigException(f"Dataset '{dataset}' cannot be used: {exc}") from exc
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Read a RunConfig JSON file.

    Args:
        path (Union[str, Path]): Config file

    Returns:
        RunConfig: Validated configuration

    Raises:
        ConfigException: On unreadable JSON, unknown keys, bad values,
            missing dataset or unsuitable resolution
    """

    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigException(f"Config file not found: '{path}'") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigException(f"Cannot read config file '{path}': {exc}") from exc
    config = parse_run_config(data)
    logger.debug(f"Loaded run config from '{path}'")
    return config


def write_effective_config(config: RunConfig, output_dir: Union[str, Path, None] = None) -> Path:
    """
    Write <output_dir>/effective_config.json (defaults applied) and echo it.

    Returns:
        Path: The written file
    """

    output_dir = Path(output_dir or config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / EFFECTIVE_CONFIG_NAME
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    echo_settings("Effective configuration", config.to_dict())
    return path
