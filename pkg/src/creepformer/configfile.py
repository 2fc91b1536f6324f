"""Flat key-value config files.

One `key = value` pair per line, `#` comments, blank lines ignored. Keys
mirror the TataConfig / TrainConfig field names and are routed to the
right dataclass; unknown keys are rejected. The default path may come
from the CREEPFORMER_CONFIG environment variable.
"""

from __future__ import annotations

import dataclasses
import os

from .model import TataConfig
from .tensor import ConfigError
from .training import TrainConfig

ENV_VAR = "CREEPFORMER_CONFIG"


def _parse_value(raw: str):
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_file(path) -> dict:
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
            values[key] = _parse_value(raw)
    return values


def build_configs(values: dict) -> tuple[TataConfig, TrainConfig]:
    """Route flat keys into (TataConfig, TrainConfig); unknown keys error."""
    tata_fields = {f.name for f in dataclasses.fields(TataConfig)}
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    overlap = tata_fields & train_fields
    assert not overlap, f"ambiguous config fields: {overlap}"
    tata_kwargs, train_kwargs = {}, {}
    for key, value in values.items():
        if key in tata_fields:
            tata_kwargs[key] = value
        elif key in train_fields:
            train_kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return TataConfig(**tata_kwargs), TrainConfig(**train_kwargs)


def load_configs(path=None) -> tuple[TataConfig, TrainConfig]:
    """Load configs from `path`, the env var, or defaults when neither is set."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return TataConfig(), TrainConfig()
    return build_configs(parse_config_file(path))
