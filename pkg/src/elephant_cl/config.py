"""Experiment configuration: a typed, validated tree loaded from YAML.

Every key is checked against the dataclass schema below; unknown keys and bad
values raise ``ConfigError`` naming the dotted field path.
"""

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from typing import List, Optional

import yaml

from elephant_cl.activations import KINDS

EXPERIMENTS = ("sine_stream", "edit", "split_mnist", "ntk_profile", "sparsity_table")


class ConfigError(ValueError):
    pass


@dataclass
class ActivationConfig:
    kind: str = "relu"
    a: float = 1.0
    d: float = 4.0


@dataclass
class ModelConfig:
    n: int = 1
    m: int = 1000
    o: int = 1
    activation: ActivationConfig = field(default_factory=ActivationConfig)
    sigma_bias: float = 0.0


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    decay: float = 0.999


@dataclass
class EwcConfig:
    gamma: float = 0.9
    lam: float = 100.0


@dataclass
class SineConfig:
    n_train: int = 200
    n_test: int = 1000
    spacing: str = "even"


@dataclass
class EditConfig:
    x: float = 1.5
    y_new: float = -1.5
    window: float = 0.25
    tolerance: float = 0.05
    max_steps: int = 20000
    lr: float = 1e-3
    pretrain_epochs: int = 2000
    pretrain_batch: int = 32
    pretrain_lr: float = 1e-3
    pretrain_target_mse: float = 0.01


@dataclass
class MnistConfig:
    data_root: Optional[str] = None
    classes_per_task: int = 2
    class_order: List[int] = field(default_factory=lambda: list(range(10)))
    eval_points: int = 5
    eval_every_batch: bool = False


@dataclass
class NtkConfig:
    profile_steps: List[int] = field(default_factory=lambda: [100, 150, 200])
    grid_points: int = 1000


@dataclass
class SparsityConfig:
    epsilon: float = 1e-3
    C: float = 1e4
    grid_points: int = 2_000_001
    kinds: List[str] = field(default_factory=lambda: ["relu", "sigmoid", "tanh", "elu", "elephant", "rect"])
    a: float = 1.0
    d: float = 4.0


@dataclass
class ExperimentConfig:
    experiment: str = "sine_stream"
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    E: int = 1
    batch: int = 1
    seeds: List[int] = field(default_factory=lambda: [0])
    ewc: Optional[EwcConfig] = None
    output_dir: str = "runs"
    timing: bool = False
    sine: SineConfig = field(default_factory=SineConfig)
    edit: EditConfig = field(default_factory=EditConfig)
    mnist: MnistConfig = field(default_factory=MnistConfig)
    ntk: NtkConfig = field(default_factory=NtkConfig)
    sparsity: SparsityConfig = field(default_factory=SparsityConfig)

    def to_dict(self):
        return dataclasses.asdict(self)

    def config_id(self):
        """Short stable hash of everything except seeds and output location."""
        d = self.to_dict()
        d.pop("seeds")
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:10]


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None or value == "null":
            return None
        return _coerce(args[0], value, path)
    if origin in (list, List):
        (item,) = typing.get_args(tp)
        if isinstance(value, str):
            value = yaml.safe_load(value)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return [_coerce(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        if value is None:
            value = {}
        return _build(tp, value, path)
    if tp is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(f"{path}: expected true/false, got {value!r}")
    if tp is int:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        try:
            out = int(value) if not isinstance(value, float) else None
        except (TypeError, ValueError):
            out = None
        if out is None:
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return out
    if tp is float:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for name in names:
        if name in data:
            sub = f"{path}.{name}" if path else name
            kwargs[name] = _coerce(hints[name], data[name], sub)
    return cls(**kwargs)


def validate(cfg):
    """Range checks that the type schema cannot express."""

    def need(ok, path, msg):
        if not ok:
            raise ConfigError(f"{path}: {msg}")

    need(cfg.experiment in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
    m = cfg.model
    need(min(m.n, m.m, m.o) >= 1, "model", "n, m and o must be >= 1")
    need(m.activation.kind in KINDS, "model.activation.kind", f"must be one of {KINDS}")
    need(m.activation.a > 0, "model.activation.a", "must be > 0")
    if m.activation.kind == "elephant":
        need(m.activation.d >= 2, "model.activation.d", "must be >= 2")
    need(m.sigma_bias >= 0, "model.sigma_bias", "must be >= 0")
    need(cfg.optimizer.kind in ("adam", "rmsprop"), "optimizer.kind", "must be adam or rmsprop")
    need(cfg.optimizer.lr > 0, "optimizer.lr", "must be > 0")
    need(0 < cfg.optimizer.decay < 1, "optimizer.decay", "must lie in (0, 1)")
    need(cfg.E >= 0, "E", "must be >= 0")
    need(cfg.batch >= 1, "batch", "must be >= 1")
    need(len(cfg.seeds) >= 1, "seeds", "must list at least one seed")
    if cfg.ewc is not None:
        need(0 < cfg.ewc.gamma < 1, "ewc.gamma", "must lie in (0, 1)")
        need(cfg.ewc.lam > 0, "ewc.lam", "must be > 0")
    need(cfg.sine.n_train >= 2, "sine.n_train", "must be >= 2")
    need(cfg.sine.spacing in ("even", "random"), "sine.spacing", "must be even or random")
    need(cfg.edit.window > 0 and cfg.edit.tolerance > 0, "edit", "window and tolerance must be > 0")
    need(cfg.mnist.eval_points >= 1, "mnist.eval_points", "must be >= 1")
    need(cfg.mnist.classes_per_task >= 1, "mnist.classes_per_task", "must be >= 1")
    for k in cfg.sparsity.kinds:
        need(k in KINDS, "sparsity.kinds", f"unknown kind {k!r}")
    return cfg


def from_dict(data):
    return validate(_build(ExperimentConfig, data))


def set_path(data, dotted, value):
    """Apply one ``--set a.b.c=value`` override to a raw config mapping."""
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        child = node.get(k)
        if child is None:
            child = node[k] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"{dotted}: {k} is not a mapping")
        node = child
    node[keys[-1]] = value


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else ""


def load(path=None, overrides=(), base=None):
    """Read YAML (or start from ``base``), apply ``key=value`` overrides, validate."""
    data = {}
    if base is not None:
        data = base
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        set_path(data, key, value)
    return from_dict(data)


def dump(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
