"""Experiment configuration and its YAML file form.

A config file mirrors :class:`ExperimentConfig` section by section. Unknown
keys are rejected, every key has a default, and seeds left unset are derived
from ``master_seed`` when the config is resolved.
"""

import copy
import dataclasses
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from . import rng
from .adversary import STRATEGIES, AttackConfig
from .aggregation import AggregatorConfig
from .errors import ConfigError, DflsimError
from .learner import TrainingConfig
from .topology import ScaleFreeParams, SmallWorldParams

__all__ = [
    "TopologyConfig",
    "AdversaryConfig",
    "DatasetConfig",
    "ExperimentConfig",
    "from_dict",
    "to_dict",
    "load_config",
    "load_raw",
    "dump_config",
    "resolve",
    "find_sweep_axes",
    "set_path",
]

TOPOLOGY_KINDS = ("small_world", "scale_free", "complete")
DATASET_KINDS = ("blobs", "mnist")


@dataclass(frozen=True)
class TopologyConfig:
    kind: str = "small_world"
    n: int = 128
    k: int = 4
    beta: float = 0.1
    m0: int = 10
    m: int = 10
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TOPOLOGY_KINDS:
            raise ConfigError(f"must be one of {TOPOLOGY_KINDS}, got {self.kind!r}", key="topology.kind")
        if self.n < 1:
            raise ConfigError("must be at least 1", key="topology.n")
        # check graph parameters now so that a sweep fails before its first point runs
        try:
            if self.kind == "small_world":
                SmallWorldParams(self.n, self.k, self.beta).validate()
            elif self.kind == "scale_free":
                ScaleFreeParams(self.n, self.m0, self.m).validate()
        except DflsimError as exc:
            raise ConfigError(str(exc), key="topology") from None


@dataclass(frozen=True)
class AdversaryConfig:
    strategy: str = "none"
    proportion: float = 0.0
    b: float = 0.0
    seed: Optional[int] = None
    attack: AttackConfig = field(default_factory=AttackConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"must be one of {STRATEGIES}, got {self.strategy!r}", key="adversary.strategy")
        if not 0.0 <= self.proportion <= 1.0:
            raise ConfigError("must lie in [0, 1]", key="adversary.proportion")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError("must lie in [0, 1]", key="adversary.b")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "blobs"
    num_classes: int = 10
    input_dim: int = 32
    # None: just enough training samples for every honest node's shard
    samples_per_class: Optional[int] = None
    spread: float = 0.3
    test_samples: int = 2000
    seed: Optional[int] = None
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"must be one of {DATASET_KINDS}, got {self.kind!r}", key="dataset.kind")
        if self.kind == "mnist":
            for name in ("train_images", "train_labels", "test_images", "test_labels"):
                if not getattr(self, name):
                    raise ConfigError("required in mnist mode", key=f"dataset.{name}")
        if self.spread < 0:
            raise ConfigError("must be non-negative", key="dataset.spread")
        if self.test_samples < self.num_classes:
            raise ConfigError("need at least one test sample per class", key="dataset.test_samples")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    aggregator: AggregatorConfig = field(default_factory=AggregatorConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    rounds: int = 30
    master_seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("must be at least 1", key="rounds")
        try:
            rng.check_seed(self.master_seed)
        except ValueError as exc:
            raise ConfigError(str(exc), key="master_seed") from None


# keys that exist on the runtime dataclasses but are not part of the file format
_HIDDEN = {AggregatorConfig: {"geomed_weights"}}
# informational section written into resolved configs; ignored when loading
REALIZED_KEY = "realized"


def _fields(cls):
    hidden = _HIDDEN.get(cls, set())
    hints = typing.get_type_hints(cls)
    return [(f.name, hints[f.name]) for f in dataclasses.fields(cls) if f.name not in hidden]


def _coerce(value, tp, key):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], key)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key=key)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=key)
        if not math.isfinite(value):
            raise ConfigError("must be finite", key=key)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=key)
        return value
    raise TypeError(f"unsupported config field type {tp!r}")


def _build(cls, data, prefix):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", key=prefix or "<root>")
    known = dict(_fields(cls))
    for key in data:
        if key not in known and not (cls is ExperimentConfig and key == REALIZED_KEY):
            raise ConfigError("unknown key", key=f"{prefix}.{key}" if prefix else str(key))
    kwargs = {}
    for name, tp in known.items():
        if name in data:
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(data[name], list):
                raise ConfigError("a list of values is only allowed in sweep configs", key=full)
            kwargs[name] = _coerce(data[name], tp, full)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except DflsimError as exc:
        raise ConfigError(str(exc), key=prefix or "<root>") from None


def from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def to_dict(cfg) -> dict:
    out = {}
    for name, _ in _fields(type(cfg)):
        value = getattr(cfg, name)
        out[name] = to_dict(value) if dataclasses.is_dataclass(value) else value
    return out


def load_raw(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", key="--config") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", key="--config") from None
    return {} if data is None else data


def load_config(path) -> ExperimentConfig:
    return from_dict(load_raw(path))


def dump_config(cfg: ExperimentConfig, extra: Optional[dict] = None) -> str:
    data = to_dict(cfg)
    if extra:
        data.update(extra)
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False)


def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill every unset seed from ``master_seed``."""
    topology, adversary, dataset = cfg.topology, cfg.adversary, cfg.dataset
    if topology.seed is None:
        topology = dataclasses.replace(topology, seed=rng.derive_seed(cfg.master_seed, rng.TOPOLOGY))
    if adversary.seed is None:
        adversary = dataclasses.replace(adversary, seed=rng.derive_seed(cfg.master_seed, rng.ADVERSARY))
    if dataset.seed is None:
        dataset = dataclasses.replace(dataset, seed=rng.derive_seed(cfg.master_seed, rng.DATA))
    return dataclasses.replace(cfg, topology=topology, adversary=adversary, dataset=dataset)


def find_sweep_axes(data: Any, prefix: str = "") -> list:
    """Dotted paths of every list-valued key in a raw config mapping."""
    axes = []
    if isinstance(data, dict):
        for key, value in data.items():
            if prefix == "" and key == REALIZED_KEY:
                continue
            path = f"{prefix}.{key}" if prefix else str(key)
            if isinstance(value, list):
                axes.append((path, value))
            else:
                axes.extend(find_sweep_axes(value, path))
    return axes


def set_path(data: dict, path: str, value) -> dict:
    out = copy.deepcopy(data)
    node = out
    parts = path.split(".")
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value
    return out
