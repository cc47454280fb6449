"""Training configuration and its JSON (de)serialisation."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .augment import EdaConfig
from .embeddings import SkipGramConfig
from .encoder import EncoderConfig
from .losses import LossWeights


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 2e-5
    epochs: int = 2
    unlabeled_pool: int = 10_000
    accumulation_steps: int = 1
    hidden: int = 100
    augmentations: int = 1
    margin: float = 0.0
    negative_replace: str = "e2"
    stop_gradient: bool = True
    validation_fraction: float = 0.1
    select_on_test: bool = False
    synonym_source: str = "embedding"
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    eda: EdaConfig = field(default_factory=EdaConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    skipgram: SkipGramConfig = field(default_factory=SkipGramConfig)

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size", f"must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError("epochs", f"must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError("lr", f"must be positive, got {self.lr}")
        if self.accumulation_steps < 1:
            raise ConfigError("accumulation_steps", f"must be >= 1, got {self.accumulation_steps}")
        if self.unlabeled_pool < 0:
            raise ConfigError("unlabeled_pool", f"must be >= 0, got {self.unlabeled_pool}")
        if self.hidden < 1:
            raise ConfigError("hidden", f"must be >= 1, got {self.hidden}")
        if self.augmentations < 1:
            raise ConfigError("augmentations", f"must be >= 1, got {self.augmentations}")
        if self.negative_replace not in ("e1", "e2"):
            raise ConfigError("negative_replace", f"must be 'e1' or 'e2', got {self.negative_replace!r}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction", f"must be in [0, 1), got {self.validation_fraction}")
        if self.synonym_source not in ("embedding", "lexicon", "none"):
            raise ConfigError("synonym_source", f"unknown source {self.synonym_source!r}")
        for name in ("ce", "consistency", "cosine"):
            if getattr(self.weights, name) < 0:
                raise ConfigError(f"weights.{name}", "must be non-negative")
        for prefix, sub in (("eda", self.eda), ("encoder", self.encoder)):
            try:
                sub.validate()
            except ValueError as exc:
                msg = str(exc)
                name = msg.split(":", 1)[0] if ":" in msg else prefix
                raise ConfigError(name if name.startswith(prefix) else prefix, msg) from None
        if self.encoder.backend == "precomputed" and self.weights.consistency:
            raise ConfigError(
                "weights.consistency",
                "the precomputed encoder cannot encode augmented sentences; set it to 0 or use tiny-transformer",
            )

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["eda"]["operations"] = list(self.eda.operations)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        cfg = cls()
        apply_overrides(cfg, _flatten(data))
        return cfg


_NESTED = {"weights", "eda", "encoder", "skipgram"}


def _flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and (prefix or k in _NESTED):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(field_name: str, current: Any, value: Any) -> Any:
    if isinstance(value, str) and not isinstance(current, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(field_name, f"cannot parse {value!r}") from None
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(field_name, f"expected true/false, got {value!r}")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(field_name, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(field_name, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(current, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(field_name, f"expected a list, got {value!r}")
        return tuple(value)
    return value


def apply_overrides(cfg: TrainConfig, overrides: dict[str, Any]) -> TrainConfig:
    """Set dotted keys such as ``encoder.dim`` in place."""
    for key, value in overrides.items():
        target = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if not hasattr(target, part) or not dataclasses.is_dataclass(getattr(target, part)):
                raise ConfigError(key, "unknown configuration field")
            target = getattr(target, part)
        name = parts[-1]
        if not dataclasses.is_dataclass(target) or name not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(key, "unknown configuration field")
        setattr(target, name, _coerce(key, getattr(target, name), value))
    return cfg


PAPER_DEFAULTS = "paper-defaults"


def load_config(path) -> TrainConfig:
    """Read a JSON config; the name ``paper-defaults`` gives the shipped defaults."""
    if str(path) == PAPER_DEFAULTS:
        return TrainConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path}: invalid JSON ({exc.msg})") from None
    return TrainConfig.from_dict(data)

