"""Versioned, schema-checked run configuration; flags override file values."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from coordkit.errors import ConfigError
from coordkit.models import DEFAULT_ENCODER_CFG, TrainConfig

CONFIG_VERSION = 1

_TOP_KEYS = {"version", "encoder", "train", "flag_mode"}
_ENCODER_KEYS = {"type", "dim", "window", "max_len", "loader", "pooling"}
_TRAIN_KEYS = {"lr", "batch_size", "epochs", "seed", "detector_loss", "optimizer", "shuffle"}


@dataclass(frozen=True)
class RunConfig:
    encoder: dict = field(default_factory=lambda: dict(DEFAULT_ENCODER_CFG))
    train: TrainConfig = field(default_factory=TrainConfig)
    flag_mode: str = "binary"


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    version = obj.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version!r} unsupported (expected {CONFIG_VERSION})")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    encoder = dict(DEFAULT_ENCODER_CFG)
    encoder.update(obj.get("encoder", {}))
    bad = set(encoder) - _ENCODER_KEYS
    if bad:
        raise ConfigError(f"unknown encoder keys: {sorted(bad)}")
    train_obj = obj.get("train", {})
    bad = set(train_obj) - _TRAIN_KEYS
    if bad:
        raise ConfigError(f"unknown train keys: {sorted(bad)}")
    flag_mode = obj.get("flag_mode", "binary")
    if flag_mode not in ("binary", "kind"):
        raise ConfigError(f"unknown flag_mode {flag_mode!r}")
    return RunConfig(encoder=encoder, train=TrainConfig(**train_obj), flag_mode=flag_mode)


def apply_overrides(
    config: RunConfig,
    seed: int | None = None,
    epochs: int | None = None,
    lr: float | None = None,
) -> RunConfig:
    train = config.train
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if epochs is not None:
        updates["epochs"] = epochs
    if lr is not None:
        updates["lr"] = lr
    if updates:
        train = replace(train, **updates)
    return RunConfig(encoder=config.encoder, train=train, flag_mode=config.flag_mode)
