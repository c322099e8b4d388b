"""Shipped defaults and user config files."""

from __future__ import annotations

import copy
import functools
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from .errors import ConfigurationError


def defaults_path() -> Path:
    return Path(__file__).parent / "data" / "defaults.yaml"


@functools.lru_cache(maxsize=1)
def _shipped() -> dict:
    with open(defaults_path(), encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def merge(base: Mapping, override: Mapping) -> dict:
    """Recursive dict merge; values in ``override`` win."""
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config(path: Union[str, Path]) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"config {path} is not a mapping")
    return dict(data)


def load_config(path: Optional[Union[str, Path]] = None) -> dict:
    """Shipped defaults, overlaid with the file at ``path`` if given."""
    cfg = copy.deepcopy(_shipped())
    if path is not None:
        cfg = merge(cfg, read_config(path))
    return cfg


def default_thresholds() -> dict[str, list[float]]:
    return {k: list(v) for k, v in _shipped()["thresholds"].items()}


def section(cfg: Mapping, name: str) -> dict[str, Any]:
    return dict(cfg.get(name) or {})
