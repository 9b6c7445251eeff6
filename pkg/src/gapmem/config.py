"""Layered configuration: defaults < config file (YAML or JSON) < environment < CLI flags."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .iris import IrisConfig
from .providers.http import API_KEY_ENV, BASE_URL_ENV, ProviderConfig

PROVIDERS_ENV = "GAPMEM_PROVIDERS"
OUT_ENV = "GAPMEM_OUT"


class ConfigError(ValueError):
    pass


@dataclass
class MemoryConfig:
    edge_threshold: float = 0.80
    hash_dimension: int = 256
    bm25_k1: float = 1.2
    bm25_b: float = 0.75


@dataclass
class CliConfig:
    iris: IrisConfig = field(default_factory=IrisConfig)
    providers: ProviderConfig = field(default_factory=ProviderConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    mode: str = "mock"
    out: str | None = None

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["iris"]["temporal_keywords"] = list(self.iris.temporal_keywords)
        return data


def _apply(obj: Any, section: str, values: Mapping[str, Any]) -> Any:
    known = {f.name for f in dataclasses.fields(obj)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return dataclasses.replace(obj, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} settings: {exc}") from exc


def read_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return data


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
    env: Mapping[str, str] | None = None,
) -> CliConfig:
    """``overrides`` has the same shape as the file: ``{"iris": {...}, ...}``
    plus top-level ``mode`` and ``out``; None values are ignored."""
    env = os.environ if env is None else env
    cfg = CliConfig()
    layers = [read_file(path) if path else {}]
    env_layer: dict[str, Any] = {}
    if env.get(BASE_URL_ENV):
        env_layer["providers"] = {"base_url": env[BASE_URL_ENV]}
    if env.get(PROVIDERS_ENV):
        env_layer["mode"] = env[PROVIDERS_ENV]
    if env.get(OUT_ENV):
        env_layer["out"] = env[OUT_ENV]
    layers.append(env_layer)
    layers.append(dict(overrides or {}))
    for layer in layers:
        for key, value in layer.items():
            if key in ("mode", "out"):
                if value is not None:
                    setattr(cfg, key, value)
            elif key in ("iris", "providers", "memory"):
                if value is not None and not isinstance(value, Mapping):
                    raise ConfigError(f"section {key!r} must be a mapping")
                kept = {k: v for k, v in (value or {}).items() if v is not None}
                setattr(cfg, key, _apply(getattr(cfg, key), key, kept))
            else:
                raise ConfigError(f"unknown config section {key!r}")
    if cfg.mode not in ("mock", "live"):
        raise ConfigError(f"providers mode must be 'mock' or 'live', got {cfg.mode!r}")
    return cfg


__all__ = ["API_KEY_ENV", "BASE_URL_ENV", "CliConfig", "ConfigError", "MemoryConfig", "load_config"]
