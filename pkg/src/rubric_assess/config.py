"""Run configuration: one flat record covering both training stages, the
encoder provider, and the ablation switches. Loadable from JSON with
environment-variable overrides (RUBRIC_ASSESS_<KEY>).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import ConfigError

ENV_PREFIX = "RUBRIC_ASSESS_"

VERIFIER_MODES = ("learned", "random", "none_truncate", "none_moving_avg")

# Hyperparameter sets used for grid search.
GRID_LEARNING_RATES = (1e-3, 1e-4, 1e-5, 5e-3, 5e-4, 5e-5)
GRID_BATCH_SIZES = (4, 8, 16)
GRID_ALPHAS = (1.0, 1.5, 2.0, 2.5, 3.0)
GRID_KS = (1, 2, 3, 4, 20, 25)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    learning_rate: float = 5e-3
    batch_size: int = 16
    epochs: int = 15
    k: int = 3
    alpha: float = 1.5
    loss: str = "oll"
    head: str = "shared"
    verifier_mode: str = "learned"
    include_report: bool = True
    report_strategy: str = "truncate"
    provider: str = "deterministic_test"
    embedding_dim: int = 64
    max_tokens: int = 128
    model_name: str = "sentence-transformers/all-MiniLM-L6-v2"
    mode: str = "scored"

    def __post_init__(self):
        for name in ("seed", "batch_size", "epochs", "k", "embedding_dim", "max_tokens"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("learning_rate", "alpha"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{name} must be a number, got {value!r}")
        if not isinstance(self.include_report, bool):
            raise ConfigError(f"include_report must be a boolean, got {self.include_report!r}")
        if self.loss not in ("oll", "ce"):
            raise ConfigError(f"loss must be oll or ce, got {self.loss!r}")
        if self.head not in ("shared", "per_dimension"):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.verifier_mode not in VERIFIER_MODES:
            raise ConfigError(f"verifier_mode must be one of {VERIFIER_MODES}")
        if self.report_strategy not in ("truncate", "moving_average"):
            raise ConfigError(f"unknown report_strategy {self.report_strategy!r}")
        if self.provider not in ("deterministic_test", "pretrained_contextual"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.mode not in ("scored", "presence"):
            raise ConfigError(f"mode must be scored or presence, got {self.mode!r}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.embedding_dim < 1 or self.max_tokens < 1:
            raise ConfigError("embedding_dim and max_tokens must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data)


def _parse_env_value(field: dataclasses.Field, raw: str):
    if field.type in ("int", int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{field.name}: {raw!r} is not an integer") from None
    if field.type in ("float", float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{field.name}: {raw!r} is not a number") from None
    if field.type in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{field.name}: {raw!r} is not a boolean")
    return raw


def env_overrides(environ=None) -> dict:
    """Config overrides from RUBRIC_ASSESS_<KEY> environment variables."""
    environ = os.environ if environ is None else environ
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    out = {}
    for name, field in fields.items():
        raw = environ.get(ENV_PREFIX + name.upper())
        if raw is not None:
            out[name] = _parse_env_value(field, raw)
    return out


def load_run_config(path=None, environ=None) -> RunConfig:
    """JSON config file (optional) with env-var overrides applied on top."""
    data: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    data.update(env_overrides(environ))
    return config_from_dict(data)
