# src/core/config.py
import os
import re
import copy
import logging
from pathlib import Path
from typing import Dict, Any, Optional, Union

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "config" / "default.yaml"
RUN_NAME_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,63}$")

logger = logging.getLogger(__name__)


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a YAML mapping, raising ConfigError on anything else"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def load_config(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """Load configuration from defaults, an optional user file and the environment"""
    load_dotenv()  # Load from .env file if present

    config = read_yaml(DEFAULT_CONFIG_PATH)
    if path is not None:
        config = _deep_merge(config, read_yaml(path))

    config.setdefault('logging', {})
    config['logging']['level'] = os.getenv('CONVEXRELU_LOG_LEVEL', config['logging'].get('level', 'INFO'))

    experiment = config.setdefault('experiment', {})
    try:
        if os.getenv('CONVEXRELU_SEED') is not None:
            experiment['seed'] = int(os.getenv('CONVEXRELU_SEED'))
        if os.getenv('CONVEXRELU_THREADS') is not None:
            experiment['threads'] = int(os.getenv('CONVEXRELU_THREADS'))
        if os.getenv('CONVEXRELU_MAX_ITER') is not None:
            config.setdefault('solver', {})['max_iter'] = int(os.getenv('CONVEXRELU_MAX_ITER'))
        if os.getenv('CONVEXRELU_RUNS_ROOT'):
            config.setdefault('api', {})['runs_root'] = os.getenv('CONVEXRELU_RUNS_ROOT')
    except ValueError as e:
        raise ConfigError(f"Invalid integer in environment override: {e}") from e

    return config


def merge_with_defaults(override: Dict[str, Any]) -> Dict[str, Any]:
    """Inline configuration (e.g. from an HTTP request) on top of the YAML defaults"""
    if not isinstance(override, dict):
        raise ConfigError("Inline configuration must be a mapping")
    return _deep_merge(read_yaml(DEFAULT_CONFIG_PATH), override)


def resolve_run_dir(runs_root: Union[str, Path], run_name: str) -> Path:
    """
    Directory of ``run_name`` below ``runs_root``.

    Only a single plain path component is accepted; anything that resolves
    outside the root (separators, ``..``, absolute paths, symlinks) raises ConfigError.
    """
    if not isinstance(run_name, str) or not RUN_NAME_PATTERN.match(run_name):
        raise ConfigError(f"Invalid run name {run_name!r}: use letters, digits, '.', '_' or '-'")
    root = Path(runs_root).resolve()
    target = (root / run_name).resolve()
    if target.parent != root:
        raise ConfigError(f"Run name {run_name!r} escapes the runs root")
    return target
