"""Communication graphs for decentralized training.

Graphs are undirected, simple and immutable. Two random generators are
provided, a Watts-Strogatz small-world model that records every rewire it
performs, and a Barabasi-Albert preferential-attachment model.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from .errors import InvalidParams, NodeOutOfRange, ParseError
from .rng import check_seed

__all__ = [
    "Graph",
    "SmallWorldParams",
    "ScaleFreeParams",
    "RewireEntry",
    "generate_small_world",
    "generate_scale_free",
    "complete_graph",
    "ring_lattice_edges",
    "neighbors",
    "is_connected",
    "degree_sequence",
    "write_edge_list",
    "read_edge_list",
    "format_edge_list",
    "parse_edge_list",
    "write_rewire_log",
]


def _pair(i, j):
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on node ids ``0..n-1``.

    ``edges`` holds unordered pairs normalized to ``(low, high)``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParams(f"node count must be non-negative, got {self.n}")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidParams(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InvalidParams(f"edge ({i}, {j}) has an endpoint outside 0..{self.n - 1}")
            normalized.add(_pair(i, j))
        object.__setattr__(self, "edges", frozenset(normalized))

    @cached_property
    def adjacency(self) -> tuple:
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return tuple(frozenset(a) for a in adj)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    def sorted_edges(self) -> list:
        return sorted(self.edges)


@dataclass(frozen=True)
class SmallWorldParams:
    n: int
    k: int = 4
    beta: float = 0.1
    seed: int = 0

    def validate(self):
        if self.k % 2 != 0 or not (2 <= self.k < self.n):
            raise InvalidParams(f"k must be even with 2 <= k < n, got k={self.k}, n={self.n}")
        if not (0.0 <= self.beta <= 1.0):
            raise InvalidParams(f"beta must lie in [0, 1], got {self.beta}")
        try:
            check_seed(self.seed)
        except ValueError as exc:
            raise InvalidParams(str(exc)) from None


@dataclass(frozen=True)
class ScaleFreeParams:
    n: int
    m0: int = 10
    m: int = 10
    seed: int = 0

    def validate(self):
        # m0 == n is accepted: the result is the complete seed graph.
        if not (1 <= self.m <= self.m0 <= self.n):
            raise InvalidParams(
                f"need 1 <= m <= m0 <= n, got m={self.m}, m0={self.m0}, n={self.n}"
            )
        try:
            check_seed(self.seed)
        except ValueError as exc:
            raise InvalidParams(str(exc)) from None


class RewireEntry(NamedTuple):
    kept: int
    old: int
    new: int


def ring_lattice_edges(n: int, k: int) -> set:
    """Edges of the ring lattice joining each node to its k/2 nearest on each side."""
    return {_pair(i, (i + j) % n) for j in range(1, k // 2 + 1) for i in range(n)}


def generate_small_world(params: SmallWorldParams) -> tuple[Graph, list[RewireEntry]]:
    """Watts-Strogatz graph plus the log of rewired edges.

    Lattice edges ``(i, i+j mod n)`` are visited for ``j = 1..k/2`` and, within
    each ``j``, ``i = 0..n-1``. With probability ``beta`` the far endpoint is
    replaced by a node drawn uniformly among those that are neither ``i`` nor
    already adjacent to ``i``; the rewire is skipped when no such node exists.
    """
    params.validate()
    n, k = params.n, params.k
    rng = np.random.default_rng(params.seed)
    adj = [set() for _ in range(n)]
    for a, b in ring_lattice_edges(n, k):
        adj[a].add(b)
        adj[b].add(a)

    log = []
    for j in range(1, k // 2 + 1):
        for i in range(n):
            far = (i + j) % n
            if rng.random() >= params.beta:
                continue
            candidates = [v for v in range(n) if v != i and v not in adj[i]]
            if not candidates:
                continue
            new = candidates[int(rng.integers(len(candidates)))]
            adj[i].discard(far)
            adj[far].discard(i)
            adj[i].add(new)
            adj[new].add(i)
            log.append(RewireEntry(i, far, new))

    edges = frozenset(_pair(a, b) for a in range(n) for b in adj[a] if a < b)
    return Graph(n, edges), log


def generate_scale_free(params: ScaleFreeParams) -> Graph:
    """Barabasi-Albert graph grown from a complete graph on ``m0`` nodes.

    Each new node draws ``m`` distinct targets; draws are proportional to the
    degree at the time the node arrives, and duplicate draws are discarded.
    """
    params.validate()
    n, m0, m = params.n, params.m0, params.m
    rng = np.random.default_rng(params.seed)
    edges = {(a, b) for a in range(m0) for b in range(a + 1, m0)}
    # one entry per edge endpoint: uniform draws from it are degree-proportional
    endpoints = [v for e in sorted(edges) for v in e]

    for new in range(m0, n):
        targets = []
        chosen = set()
        pool = np.asarray(endpoints) if endpoints else np.arange(new)
        while len(targets) < m:
            t = int(pool[rng.integers(len(pool))])
            if t not in chosen:
                chosen.add(t)
                targets.append(t)
        for t in targets:
            edges.add((t, new))
            endpoints.extend((t, new))
    return Graph(n, frozenset(edges))


def complete_graph(n: int) -> Graph:
    return Graph(n, frozenset((a, b) for a in range(n) for b in range(a + 1, n)))


def neighbors(g: Graph, i: int) -> frozenset:
    if not 0 <= i < g.n:
        raise NodeOutOfRange(f"node {i} is outside 0..{g.n - 1}")
    return g.adjacency[i]


def is_connected(g: Graph) -> bool:
    if g.n == 0:
        return True
    seen = {0}
    frontier = [0]
    while frontier:
        v = frontier.pop()
        for w in g.adjacency[v]:
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return len(seen) == g.n


def degree_sequence(g: Graph) -> list[tuple[int, int]]:
    """``(node, degree)`` pairs, degree descending, ties by ascending node id."""
    deg = g.degrees()
    return sorted(((i, int(deg[i])) for i in range(g.n)), key=lambda p: (-p[1], p[0]))


def format_edge_list(g: Graph) -> str:
    lines = [f"n {g.n}"] + [f"{i} {j}" for i, j in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def write_edge_list(g: Graph, sink: TextIO) -> None:
    sink.write(format_edge_list(g))


def parse_edge_list(text: str) -> Graph:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty edge list", line=1)
    head = lines[0].split()
    if len(head) != 2 or head[0] != "n":
        raise ParseError("expected header 'n <count>'", line=1)
    try:
        n = int(head[1])
    except ValueError:
        raise ParseError(f"bad node count {head[1]!r}", line=1) from None
    if n < 0:
        raise ParseError("node count must be non-negative", line=1)

    edges = set()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'i j', got {line!r}", line=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", line=lineno) from None
        if i == j:
            raise ParseError(f"self-loop on node {i}", line=lineno)
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"node id out of range 0..{n - 1}", line=lineno)
        pair = _pair(i, j)
        if pair in edges:
            raise ParseError(f"duplicate edge {pair}", line=lineno)
        edges.add(pair)
    return Graph(n, frozenset(edges))


def read_edge_list(source) -> Graph:
    """Parse an edge list from a text stream, a path, or a string of file content."""
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return parse_edge_list(source.read())
    with open(source, encoding="utf-8", newline="") as fh:
        return parse_edge_list(fh.read())


def write_rewire_log(log: Iterable[RewireEntry], sink: TextIO) -> None:
    for e in log:
        sink.write(f"{e.kept} {e.old} {e.new}\n")
