"""Byzantine node placement and the Gaussian-noise model attack."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidParams, InvalidProportion
from .topology import Graph, RewireEntry, degree_sequence

__all__ = [
    "AdversaryPlan",
    "AttackConfig",
    "select_none",
    "select_random",
    "select_smallworld_strategic",
    "select_scalefree_strategic",
    "gaussian_attack",
    "round_half_up",
]

STRATEGIES = ("none", "random", "small_world_rewired", "scale_free_top_degree")


@dataclass(frozen=True)
class AdversaryPlan:
    byzantine: frozenset
    strategy: str
    parameter: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidParams(f"unknown placement strategy {self.strategy!r}")
        object.__setattr__(self, "byzantine", frozenset(int(i) for i in self.byzantine))

    def is_byzantine(self, i: int) -> bool:
        return i in self.byzantine

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "parameter": self.parameter,
            "seed": self.seed,
            "byzantine": sorted(self.byzantine),
        }


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "gaussian"
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind != "gaussian":
            raise InvalidParams(f"only the gaussian attack is supported, got {self.kind!r}")
        if not self.std > 0:
            raise InvalidParams("attack std must be positive")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _check_proportion(p):
    if not (0.0 <= p <= 1.0):
        raise InvalidProportion(f"proportion must lie in [0, 1], got {p}")


def select_none() -> AdversaryPlan:
    return AdversaryPlan(frozenset(), "none")


def select_random(n: int, proportion: float, seed: int) -> AdversaryPlan:
    """``round(proportion * n)`` distinct ids drawn uniformly without replacement."""
    _check_proportion(proportion)
    count = round_half_up(proportion * n)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=count, replace=False) if count else []
    return AdversaryPlan(frozenset(int(i) for i in chosen), "random", proportion, seed)


def select_smallworld_strategic(log: Iterable[RewireEntry], n: int) -> AdversaryPlan:
    """Every node that received a rewired edge becomes Byzantine."""
    chosen = frozenset(int(e.new) for e in log)
    if any(not 0 <= i < n for i in chosen):
        raise InvalidParams("rewire log refers to nodes outside the graph")
    return AdversaryPlan(chosen, "small_world_rewired")


def select_scalefree_strategic(g: Graph, b: float) -> AdversaryPlan:
    """The first ``floor(b * n)`` entries of the degree sequence."""
    _check_proportion(b)
    # the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    count = int(math.floor(b * g.n + 1e-9))
    chosen = frozenset(i for i, _ in degree_sequence(g)[:count])
    return AdversaryPlan(chosen, "scale_free_top_degree", b)


def gaussian_attack(d: int, cfg: AttackConfig, stream: np.random.Generator) -> np.ndarray:
    """Fresh ``Normal(mean, std^2)`` parameter vector of length ``d``."""
    if d < 1:
        raise InvalidParams("attack dimension must be at least 1")
    return stream.normal(cfg.mean, cfg.std, size=d)
