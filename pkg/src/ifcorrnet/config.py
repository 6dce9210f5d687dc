"""Run configuration: a YAML key tree mirroring the dataclass configs.

Example (every key optional)::

    seed: 0
    model: {L: 3, C: 96, B: 6, C_H: 192, K: 7, n_heads: 4}
    train: {lr: 0.001, max_epochs: 40, batch_size: 2, segment_seconds: 4.0}
    loss: {fft_sizes: [256, 512, 768, 1024]}
    data: {duration_s: 4.0, snr_db: 20.0, noise_kind: hum+white}
    dataset: {n_train: 16, n_valid: 4}
    evaluate: {align: false, workers: 1}
    sweep: {taps: [0, 1, 3, 5]}

Overrides use dotted keys, e.g. ``--set model.C=64 --set train.max_epochs=0``.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import DataConfig
from .losses import LossConfig
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    n_train: int = 16
    n_valid: int = 4
    train_manifest: str | None = None
    valid_manifest: str | None = None


@dataclass
class EvalConfig:
    align: bool = False
    workers: int = 1
    max_utts: int | None = None


@dataclass
class SweepConfig:
    taps: list[int] = field(default_factory=lambda: [0, 1, 3, 5])


def _desk_model() -> ModelConfig:
    return ModelConfig(C=16, B=2, C_H=32, K=3, n_heads=4)


@dataclass
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=_desk_model)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    data: DataConfig = field(default_factory=DataConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    evaluate: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)


def _build(cls, values: dict, path: str = ""):
    if not isinstance(values, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping, got {type(values).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(path + k for k in unknown))}")
    kwargs = {}
    for name, value in values.items():
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{path}{name}.")
        elif typing.get_origin(hint) is tuple and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path.rstrip('.') or 'config'}: {exc}") from exc


def to_dict(cfg) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        if isinstance(v, list):
            return [plain(x) for x in v]
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        return v

    return plain(dataclasses.asdict(cfg))


def apply_override(tree: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a section")
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(path: str | Path | None = None, overrides: list[str] = (), seed: int | None = None) -> RunConfig:
    tree: dict = {}
    if path is not None:
        try:
            tree = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for item in overrides:
        apply_override(tree, item)
    if seed is not None:
        tree["seed"] = seed
    cfg = _build(RunConfig, tree)
    cfg.train.seed = cfg.seed
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)


def echo_config(cfg: RunConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.yaml"
    path.write_text(dump_config(cfg))
    return path
