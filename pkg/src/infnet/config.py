"""Run configuration: one flat YAML mapping of dotted keys.

Every key has a default, so an empty file is a valid configuration. Unknown
keys are rejected. Keys set to ``null`` whose value a subcommand needs raise
a :class:`ConfigError` naming the key.

Seeds: every random component derives its own seed from ``seed`` through
:func:`derive_seed`, i.e. ``SeedSequence(seed, spawn_key=(crc32(name),))``
with ``name`` one of ``synth``, ``split``, ``train``, ``shuffle``. Changing
one component's consumption of random numbers never shifts another's stream.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .events import ConfigError, TimeGrid, build_time_grid
from .model import ModelConfig
from .sampler import FeatureConfig
from .synth import SynthConfig
from .eval.training import TrainConfig

_SYNTH_DEFAULTS = SynthConfig()

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "precision": "f64",
    # inputs; null means "the logs written by `gen` under <out>/logs"
    "paths.out": "run",
    "paths.logs": None,
    # grid for externally supplied logs; null means "taken from synth.*"
    "grid.start": None,
    "grid.step_length": None,
    "grid.steps": None,
    "features.bins": 10,
    "features.lookback": None,
    "sampler.depth": 2,
    "model.hidden_size": 32,
    "model.structural_layers": 2,
    "model.diffusion_layers": 2,
    "model.encoder": "self-attn",
    "model.edge_attention": True,
    "model.structural_block": True,
    "model.masks": [],
    "train.lr": 0.001,
    "train.batch_size": 512,
    "train.max_epochs": 40,
    "train.patience": 5,
    "split.train_ratio": 0.7,
    "analytics.horizon": None,
    "ablate.variants": [
        "encoder=none",
        "encoder=mean",
        "encoder=gru",
        "-user",
        "-item",
        "-taocode",
        "-attention",
        "-structural",
    ],
}
for _name in SynthConfig.__dataclass_fields__:
    if _name != "seed":
        DEFAULTS[f"synth.{_name}"] = getattr(_SYNTH_DEFAULTS, _name)


def derive_seed(seed: int, name: str) -> int:
    """Per-component seed fanned out from the run seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if isinstance(value, str):
            low = value.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"config key {key} expects true/false, got {value!r}")
    if isinstance(default, list):
        if isinstance(value, str):
            return [v for v in (s.strip() for s in value.split(",")) if v]
        if isinstance(value, list):
            return [str(v) for v in value]
        raise ConfigError(f"config key {key} expects a list, got {value!r}")
    try:
        return type(default)(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key} expects {type(default).__name__}, got {value!r}") from None


def _coerce_nullable(key: str, value: Any) -> Any:
    """Keys whose default is null take ints (or stay null)."""
    if value is None or DEFAULTS[key] is not None:
        return _coerce(key, value)
    if key == "paths.logs":
        return str(value)
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key} expects an integer, got {value!r}") from None


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))
    overridden: list[str] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path | None = None) -> RunConfig:
        cfg = cls()
        if path is None:
            return cfg
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {p} must hold a mapping of dotted keys")
        for k, v in raw.items():
            cfg.set(str(k), v)
        cfg.overridden.clear()
        return cfg

    def set(self, key: str, value: Any) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce_nullable(key, value)
        self.overridden.append(key)

    def __getitem__(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def require(self, key: str) -> Any:
        value = self[key]
        if value is None:
            raise ConfigError(f"missing config key {key}")
        return value

    def dump(self) -> str:
        return yaml.safe_dump(dict(sorted(self.values.items())), sort_keys=False)

    # ---- typed views ---------------------------------------------------------------

    @property
    def out(self) -> Path:
        return Path(self["paths.out"])

    @property
    def logs_dir(self) -> Path:
        return Path(self["paths.logs"]) if self["paths.logs"] else self.out / "logs"

    @property
    def dtype(self) -> np.dtype:
        prec = self["precision"]
        if prec not in ("f64", "f32"):
            raise ConfigError(f"precision must be f64 or f32, got {prec!r}")
        return np.dtype(np.float64 if prec == "f64" else np.float32)

    def synth(self) -> SynthConfig:
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("synth.")}
        try:
            return SynthConfig(seed=derive_seed(self["seed"], "synth"), **kw)
        except ValueError as exc:
            raise ConfigError(f"synth: {exc}") from None

    def grid(self) -> TimeGrid:
        if self["paths.logs"] is None:
            g = self.synth().grid
            start = self["grid.start"] if self["grid.start"] is not None else g.start
            length = self["grid.step_length"] if self["grid.step_length"] is not None else g.step_length
            steps = self["grid.steps"] if self["grid.steps"] is not None else g.n
            return build_time_grid(start, length, steps)
        return build_time_grid(self.require("grid.start"), self.require("grid.step_length"), self.require("grid.steps"))

    def horizon(self) -> int:
        h = self["analytics.horizon"]
        return int(h) if h is not None else self.grid().step_length

    def features(self, catalog) -> FeatureConfig:
        return FeatureConfig.from_catalog(catalog, self["features.bins"], self["features.lookback"])

    def model(self) -> ModelConfig:
        try:
            return ModelConfig(
                hidden=self["model.hidden_size"],
                structural_layers=self["model.structural_layers"],
                diffusion_layers=self["model.diffusion_layers"],
                encoder=self["model.encoder"],
                use_edge_attention=self["model.edge_attention"],
                use_structural_block=self["model.structural_block"],
                masks=frozenset(self["model.masks"]),
            )
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    def train(self) -> TrainConfig:
        return TrainConfig(
            lr=self["train.lr"],
            batch_size=self["train.batch_size"],
            max_epochs=self["train.max_epochs"],
            patience=self["train.patience"],
            seed=derive_seed(self["seed"], "train"),
        )
