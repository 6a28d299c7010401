"""Synchronous decentralized training rounds over a fixed topology.

Every round, honest nodes train locally and Byzantine nodes draw a noise
vector; every honest node then aggregates its own fresh update with those of
its neighbors, all read from the same snapshot. Metrics are computed on one
shared test set.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .adversary import (
    AdversaryPlan,
    gaussian_attack,
    select_none,
    select_random,
    select_scalefree_strategic,
    select_smallworld_strategic,
)
from .aggregation import aggregate
from .config import ExperimentConfig, resolve
from .errors import ConfigError, NoHonestNodes, TooFewUpdates
from .learner import (
    Dataset,
    evaluate,
    evaluate_loss,
    load_idx,
    local_train,
    param_dim,
    partition,
    synth_blobs,
)
from .topology import (
    Graph,
    ScaleFreeParams,
    SmallWorldParams,
    complete_graph,
    generate_scale_free,
    generate_small_world,
    is_connected,
)

__all__ = [
    "HONEST",
    "BYZANTINE",
    "NodeState",
    "NodeMetrics",
    "RoundMetrics",
    "SimulationState",
    "build_topology",
    "build_adversary",
    "build_datasets",
    "initialize",
    "run_round",
    "run_experiment",
    "honest_mean_accuracy",
]

log = logging.getLogger(__name__)

HONEST = "honest"
BYZANTINE = "byzantine"
INIT_STD = 0.01


@dataclass(frozen=True)
class NodeState:
    id: int
    role: str
    params: Optional[np.ndarray]
    shard: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NodeMetrics:
    id: int
    role: str
    accuracy: float
    loss: float


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    per_node: tuple
    honest_mean_accuracy: float
    train_calls: int = 0
    attack_draws: int = 0


@dataclass
class SimulationState:
    config: ExperimentConfig
    graph: Graph
    rewire_log: list
    plan: AdversaryPlan
    train: Dataset
    test: Dataset
    nodes: list
    round: int = 0  # completed rounds
    neighbor_lists: list = field(default_factory=list)

    @property
    def honest_ids(self) -> list:
        return [s.id for s in self.nodes if s.role == HONEST]


def build_topology(cfg: ExperimentConfig):
    t = cfg.topology
    if t.kind == "small_world":
        return generate_small_world(SmallWorldParams(t.n, t.k, t.beta, t.seed))
    if t.kind == "scale_free":
        return generate_scale_free(ScaleFreeParams(t.n, t.m0, t.m, t.seed)), []
    return complete_graph(t.n), []


def build_adversary(cfg: ExperimentConfig, graph: Graph, rewire_log) -> AdversaryPlan:
    a = cfg.adversary
    if a.strategy == "none":
        return select_none()
    if a.strategy == "random":
        return select_random(graph.n, a.proportion, a.seed)
    if a.strategy == "small_world_rewired":
        if cfg.topology.kind != "small_world":
            raise ConfigError("small_world_rewired placement needs a small_world topology", key="adversary.strategy")
        return select_smallworld_strategic(rewire_log, graph.n)
    if cfg.topology.kind != "scale_free":
        log.warning("top-degree placement on a %s topology", cfg.topology.kind)
    return select_scalefree_strategic(graph, a.b)


def build_datasets(cfg: ExperimentConfig, n_honest: int) -> tuple[Dataset, Dataset]:
    d = cfg.dataset
    if d.kind == "mnist":
        train = load_idx(d.train_images, d.train_labels, d.num_classes)
        test = load_idx(d.test_images, d.test_labels, d.num_classes)
        return train, test
    per_class = d.samples_per_class
    if per_class is None:
        per_class = max(1, -(-n_honest * cfg.training.samples_per_node // d.num_classes))
    train = synth_blobs(d.num_classes, d.input_dim, per_class, d.spread, d.seed)
    test_seed = rng.derive_seed(d.seed, rng.TEST_DATA)
    test = synth_blobs(
        d.num_classes, d.input_dim, d.test_samples // d.num_classes, d.spread, test_seed, centers_seed=d.seed
    )
    return train, test


def initialize(cfg: ExperimentConfig) -> SimulationState:
    """Build graph, adversary plan, data, shards and the shared initial model."""
    cfg = resolve(cfg)
    graph, rewire_log = build_topology(cfg)
    if not is_connected(graph):
        log.warning("communication graph is disconnected")
    plan = build_adversary(cfg, graph, rewire_log)
    honest = [i for i in range(graph.n) if i not in plan.byzantine]
    train, test = build_datasets(cfg, len(honest))
    shards = partition(
        train, len(honest), cfg.training.samples_per_node, rng.derive_seed(cfg.master_seed, rng.PARTITION)
    )
    d = param_dim(train.num_classes, train.input_dim)
    w0 = rng.stream(cfg.master_seed, rng.INIT).normal(0.0, INIT_STD, size=d)
    shard_of = dict(zip(honest, shards))
    nodes = [
        NodeState(i, HONEST, w0.copy(), shard_of[i]) if i in shard_of else NodeState(i, BYZANTINE, None)
        for i in range(graph.n)
    ]
    neighbor_lists = [sorted(graph.adjacency[i]) for i in range(graph.n)]
    log.info(
        "initialized: n=%d edges=%d byzantine=%d d=%d", graph.n, graph.num_edges, len(plan.byzantine), d
    )
    return SimulationState(cfg, graph, rewire_log, plan, train, test, nodes, 0, neighbor_lists)


def honest_mean_accuracy(per_node) -> float:
    accs = [m.accuracy for m in per_node if m.role == HONEST]
    if not accs:
        raise NoHonestNodes("no honest nodes to average over")
    return float(np.mean(accs))


def _map(pool, fn, items):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def run_round(state: SimulationState, threads: int = 1) -> tuple[SimulationState, RoundMetrics]:
    """Advance one round; returns a new state and that round's metrics."""
    cfg = state.config
    t = state.round
    d = param_dim(state.train.num_classes, state.train.input_dim)

    def emit(node: NodeState):
        if node.role == HONEST:
            stream = rng.stream(cfg.master_seed, rng.TRAIN, node.id, t)
            return local_train(node.params, state.train, node.shard, cfg.training, stream)
        stream = rng.stream(cfg.master_seed, rng.ATTACK, node.id, t)
        return gaussian_attack(d, cfg.adversary.attack, stream)

    def combine(node: NodeState):
        if node.role != HONEST:
            return node
        received = [updates[j] for j in state.neighbor_lists[node.id]]
        try:
            params = aggregate(updates[node.id], received, cfg.aggregator)
        except TooFewUpdates as exc:
            raise TooFewUpdates(f"node {node.id}: {exc}", node=node.id) from None
        return dataclasses.replace(node, params=params)

    def score(node: NodeState):
        vec = node.params if node.role == HONEST else updates[node.id]
        return NodeMetrics(node.id, node.role, evaluate(vec, state.test), evaluate_loss(vec, state.test))

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        updates = dict(zip((s.id for s in state.nodes), _map(pool, emit, state.nodes)))
        nodes = _map(pool, combine, state.nodes)
        per_node = tuple(_map(pool, score, nodes))
    finally:
        if pool is not None:
            pool.shutdown()

    n_honest = sum(1 for s in nodes if s.role == HONEST)
    metrics = RoundMetrics(
        t + 1, per_node, honest_mean_accuracy(per_node), train_calls=n_honest, attack_draws=len(nodes) - n_honest
    )
    log.info("round %d: honest mean accuracy %.4f", t, metrics.honest_mean_accuracy)
    return dataclasses.replace(state, nodes=nodes, round=t + 1), metrics


def run_experiment(
    cfg: ExperimentConfig,
    threads: int = 1,
    on_round: Optional[Callable[[RoundMetrics], None]] = None,
    state: Optional[SimulationState] = None,
) -> list[RoundMetrics]:
    """Initialize and run exactly ``cfg.rounds`` rounds."""
    if state is None:
        state = initialize(cfg)
    history = []
    for _ in range(cfg.rounds):
        state, metrics = run_round(state, threads)
        history.append(metrics)
        if on_round is not None:
            on_round(metrics)
    return history
