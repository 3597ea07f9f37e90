#!/usr/bin/env python3
"""
Centralized configuration for the jump-diffusion toolkit.

Resolves the config/data directory from:
1. JUMP_DIFFUSION_HOME environment variable (if set)
2. Default: ~/Documents/jump-diffusion

Numeric defaults shared by every module live in DEFAULTS.

Usage:
    from config import get_data_dir, get_path, DEFAULTS

    DATA_DIR = get_data_dir()
    OUT_FILE = get_path('entropy.csv')
"""

import json
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

class ConfigError(ValueError):
    """Run-config document or values are missing, mistyped or out of range."""


DEFAULT_DATA_DIR = Path.home() / "Documents" / "jump-diffusion"
ENV_VAR = "JUMP_DIFFUSION_HOME"

DEFAULTS: Dict[str, Any] = {
    "tol": 1e-9,                # invariant and condition checks
    "intensity_floor": 1e-9,    # lower bound enforced on gamma^Q over the horizon
    "grid_points": 2048,        # default step = horizon / grid_points
    "root_tol": 1e-12,          # |f| target for bisection
    "root_max_iter": 200,
    "newton_max_iter": 100,
    "switch_limit": 10 ** 7,    # switches per path before SwitchLimitError
    "seed": 20160907,
    "n_paths": 10000,
    "min_paths": 100,
    "gauss_nodes": 4,           # Gauss-Legendre nodes per grid cell
}


@lru_cache(maxsize=1)
def get_data_dir() -> Path:
    """
    Resolve data directory from env var or default.

    Returns:
        Path: Resolved and expanded data directory path
    """
    env_path = os.environ.get(ENV_VAR)
    if env_path:
        return Path(env_path).expanduser().resolve()
    return DEFAULT_DATA_DIR.expanduser().resolve()


def get_path(*subdirs: str) -> Path:
    """
    Get path relative to data directory.

    Example:
        get_path('models', 'figure_one.json')
    """
    return get_data_dir() / Path(*subdirs)


def resolve_input(path: str, base: Optional[Path] = None) -> Path:
    """
    Locate an input file.

    Tried in order: the path as given, relative to `base` (the directory of
    the config file that referenced it), relative to the data directory.
    The first existing candidate wins; otherwise the path as given is returned
    so the caller's open() produces the natural error.
    """
    candidate = Path(path).expanduser()
    if candidate.is_absolute() or candidate.exists():
        return candidate
    if base is not None and (base / candidate).exists():
        return base / candidate
    if get_path(str(candidate)).exists():
        return get_path(str(candidate))
    return candidate


def default_step(horizon: float) -> float:
    """Default uniform grid step for a horizon."""
    return horizon / DEFAULTS["grid_points"]


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a JSON run-config document.

    The directory of the file is remembered under '_base_dir' so spec files
    referenced inside it can be resolved relative to the config.
    """
    config_path = resolve_input(path)
    with open(config_path) as f:
        config = json.load(f)
    if not isinstance(config, dict):
        raise ConfigError(f"Config must be a JSON object: {config_path}")
    config["_base_dir"] = str(config_path.parent.resolve())
    return config


def merge_flags(config: Dict[str, Any], flags: Dict[str, Any]) -> Dict[str, Any]:
    """Overlay command-line flags on a config dict. Flags that are None are ignored."""
    merged = dict(config)
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    return merged
