"""Layered run configuration: defaults, then a TOML file, then CLI flags.

The file mirrors module boundaries with flat sections ([corpus], [model],
[train], [tune]); unknown sections or keys are rejected so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .models import Hyper
from .trainer import TrainConfig


@dataclass
class CliConfig:
    # [corpus]
    min_tokens: int = 75
    max_tokens: int = 87
    min_freq: int = 1
    resample: str = "none"
    n_target: int = 4000
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    # [model]
    arch: str = "modified_rnn"
    classes: int = 5
    embed_dim: int = 50
    hidden_dim: int = 50
    steps: int = 8
    max_len: int = 88
    padded: bool = True
    # [train]
    lr: float = 0.01
    l2: float = 0.0
    keep_prob: float = 1.0
    epochs: int = 7
    batch_size: int = 50
    seed: int = 0
    eval_every: int = 1
    mask_pad_slices: bool = False
    truncation: str = "per_slice"
    # [tune]
    lr_grid: tuple[float, ...] = (1e-6, 1e-5, 1e-4, 1e-3)
    l2_grid: tuple[float, ...] = (1e-6, 1e-4, 0.009, 0.09)
    keep_grid: tuple[float, ...] = (0.8, 0.9, 1.0)
    jobs: int = 1

    def train_config(self) -> TrainConfig:
        hyper = Hyper(
            lr=self.lr,
            l2=self.l2,
            keep_prob=self.keep_prob,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            mask_pad_slices=self.mask_pad_slices,
            truncation=self.truncation,
        )
        return TrainConfig(
            arch=self.arch,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            num_classes=self.classes,
            steps=self.steps,
            max_len=self.max_len,
            padded=self.padded,
            resample=self.resample,
            n_target=self.n_target,
            eval_every=self.eval_every,
            hyper=hyper,
        )


SECTIONS = {
    "corpus": ("min_tokens", "max_tokens", "min_freq", "resample", "n_target",
               "ratios"),
    "model": ("arch", "classes", "embed_dim", "hidden_dim", "steps", "max_len",
              "padded"),
    "train": ("lr", "l2", "keep_prob", "epochs", "batch_size", "seed",
              "eval_every", "mask_pad_slices", "truncation"),
    "tune": ("lr_grid", "l2_grid", "keep_grid", "jobs"),
}

# file keys for the grid lists drop the _grid suffix: [tune] lr = [...]
_FILE_KEY_ALIASES = {("tune", "lr"): "lr_grid", ("tune", "l2"): "l2_grid",
                     ("tune", "keep_prob"): "keep_grid"}


def load_config_file(path: str | Path) -> dict:
    """Parse and validate a config file into {field_name: value}."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}")
    out: dict = {}
    for section, table in doc.items():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        for key, value in table.items():
            name = _FILE_KEY_ALIASES.get((section, key), key)
            if name not in SECTIONS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            out[name] = value
    return out


def merge_config(file_values: dict, overrides: dict) -> CliConfig:
    """defaults <- file <- flag overrides (None overrides are ignored)."""
    cfg = CliConfig()
    for source in (file_values, overrides):
        for name, value in source.items():
            if value is None:
                continue
            if not hasattr(cfg, name):
                raise ConfigError(f"unknown config field {name!r}")
            if name in ("ratios", "lr_grid", "l2_grid", "keep_grid"):
                value = tuple(float(v) for v in value)
            setattr(cfg, name, value)
    _check(cfg)
    return cfg


def _check(cfg: CliConfig) -> None:
    if cfg.arch not in ("modified_rnn", "perstep_rnn", "gru"):
        raise ConfigError(f"unknown arch {cfg.arch!r}")
    if cfg.classes not in (4, 5):
        raise ConfigError(f"classes must be 4 or 5, got {cfg.classes}")
    if cfg.min_tokens > cfg.max_tokens:
        raise ConfigError(
            f"min_tokens {cfg.min_tokens} > max_tokens {cfg.max_tokens}"
        )
    if cfg.max_tokens + 1 > cfg.max_len:
        raise ConfigError(
            f"max_tokens {cfg.max_tokens} + EOS does not fit max_len {cfg.max_len}"
        )
    if len(cfg.ratios) != 3:
        raise ConfigError(f"ratios needs three values, got {cfg.ratios}")
