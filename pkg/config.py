"""Run settings: dataclass defaults, flat key=value files and command-line overrides.

A config file holds one ``key=value`` per line; ``#`` starts a comment. Tuple
values are comma separated (``k_list=8,16``).
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, get_type_hints

from datasets.splits import SPLIT_MODES
from samgc.errors import ConfigurationError
from samgc.layer import VARIANTS

logger = logging.getLogger(__name__)

DATA_DIR = os.environ.get("SAMGC_CORA_DIR", "data/cora")
OUT_DIR = "./out"
TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


@dataclass
class RunConfig:
    # inputs and outputs
    data_dir: str = DATA_DIR
    out_dir: str = OUT_DIR
    precision: int = 6

    # convolution
    hops: int = 2
    hidden_dim: int = 64
    re_dim: int = 16
    nw_dim: int = 16
    variant: str = "samgc"
    leaky_alpha: float = 0.01

    # point clouds
    k_list: tuple[int, ...] = (8, 16)
    pool_ratio: float = 0.5
    phases: int = 2
    pc_points: int = 128
    pc_per_class: int = 200
    pc_test_per_class: int = 50
    pc_noise: float = 0.02
    pc_hidden: int = 16
    pc_epochs: int = 8
    pc_lr: float = 0.005
    pc_weight_decay: float = 0.0
    batch_size: int = 16

    # optimisation
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 300
    patience: int = 30

    # seeds and splits
    seed: int = 0
    seeds: int = 5
    split: str = "standard"
    train_frac: float = 0.6
    val_frac: float = 0.2
    row_normalize: bool = False

    _source: str = field(default="", repr=False, compare=False)

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(
            f.name for f in dataclasses.fields(cls) if not f.name.startswith("_")
        )

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        if not os.path.isfile(path):
            raise FileNotFoundError(f"config file {path} does not exist")
        with open(path, "r") as f:
            text = f.read()
        if not text.strip():
            logger.warning("config file %s is empty", path)
        config = cls().update(parse_config_text(text, path))
        config._source = path
        return config

    def update(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """A copy with ``overrides`` applied; strings are coerced to the field type."""
        hints = get_type_hints(type(self))
        changes = {}
        for key, value in overrides.items():
            if key not in self.keys():
                raise ConfigurationError(f"unknown config key {key!r}")
            if isinstance(value, str):
                value = coerce(key, hints[key], value)
            changes[key] = value
        return dataclasses.replace(self, **changes)

    def validate(self) -> "RunConfig":
        if self.hops < 1:
            raise ConfigurationError(f"hops must be >= 1, got {self.hops}")
        if not self.k_list or min(self.k_list) < 1:
            raise ConfigurationError(
                f"k_list must hold positive values, got {self.k_list}"
            )
        if not 0.0 < self.pool_ratio <= 1.0:
            raise ConfigurationError(
                f"pool_ratio must lie in (0, 1], got {self.pool_ratio}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}"
            )
        if self.split not in SPLIT_MODES:
            raise ConfigurationError(f"unknown split mode {self.split!r}")
        for key in ("phases", "patience", "seeds", "batch_size", "precision"):
            value = getattr(self, key)
            if value < 1:
                raise ConfigurationError(f"{key} must be >= 1, got {value}")
        for key in ("epochs", "pc_epochs", "lr", "pc_lr", "weight_decay"):
            value = getattr(self, key)
            if value < 0:
                raise ConfigurationError(f"{key} must be >= 0, got {value}")
        return self

    def as_dict(self) -> dict[str, Any]:
        return {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in ((k, getattr(self, k)) for k in self.keys())
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "RunConfig":
        """Inverse of ``as_dict``, e.g. for the config echo stored in a checkpoint."""
        return cls().update(
            {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
        )

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def coerce(key: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in TRUE_WORDS:
                return True
            if lowered in FALSE_WORDS:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # tuple[int, ...]
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigurationError(f"{key}: cannot read {raw!r} as {kind}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    hints = get_type_hints(RunConfig)
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{line_no}: expected key=value")
        if key not in RunConfig.keys():
            raise ConfigurationError(f"{source}:{line_no}: unknown key {key!r}")
        values[key] = coerce(f"{source}:{line_no}: {key}", hints[key], value)
    return values


def parse_assignments(pairs) -> dict[str, Any]:
    """``KEY=VALUE`` strings from ``--set`` flags."""
    return parse_config_text("\n".join(pairs or []), "--set")


def load_config(path: str | None = None, overrides: Mapping[str, Any] | None = None):
    """Defaults < file < overrides, validated."""
    config = RunConfig.from_file(path) if path else RunConfig()
    if overrides:
        config = config.update(overrides)
    return config.validate()
