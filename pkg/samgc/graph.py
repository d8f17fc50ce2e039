"""Undirected graphs in CSR form, k-NN construction and exact hop sets."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from samgc.autodiff import Tensor
from samgc.errors import ConfigurationError, ContractError, ShapeError

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=np.int64)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric adjacency without self-loops; neighbors sorted per node."""

    n: int
    row_offsets: np.ndarray
    targets: np.ndarray
    undirected: bool = True

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets))
        object.__setattr__(self, "targets", _frozen(self.targets))
        if len(self.row_offsets) != self.n + 1 or self.row_offsets[-1] != len(
            self.targets
        ):
            raise ShapeError(
                f"row_offsets of length {len(self.row_offsets)} do not describe "
                f"{self.n} nodes with {len(self.targets)} entries"
            )

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> "Graph":
        """Union-symmetrize ``edges``; duplicates and self-loops are dropped."""
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise ContractError(f"edge endpoint outside [0, {n})")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
        both = np.unique(both, axis=0)
        rows, targets = both[:, 0], both[:, 1]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        return cls(n, np.cumsum(offsets), targets)

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))

    def neighbors(self, v: int) -> np.ndarray:
        return self.targets[self.row_offsets[v] : self.row_offsets[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def num_entries(self) -> int:
        return len(self.targets)

    @property
    def num_edges(self) -> int:
        return len(self.targets) // 2

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Owning node of every CSR entry (the target node v of edge u->v)."""
        return _frozen(np.repeat(np.arange(self.n), self.degrees()))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.num_entries, dtype=np.int64)
        return sp.csr_matrix((data, self.targets, self.row_offsets), shape=(self.n, self.n))

    @cached_property
    def neighbor_mean(self) -> sp.csr_matrix:
        """(n x n) operator averaging each node's one-hop neighbors."""
        degrees = self.degrees()
        weights = np.repeat(1.0 / np.maximum(degrees, 1), degrees)
        return sp.csr_matrix(
            (weights, self.targets, self.row_offsets), shape=(self.n, self.n)
        )

    @cached_property
    def edge_selectors(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        """(E x n) operators picking h_u, h_v and h_u - h_v for every CSR entry."""
        picks = np.arange(self.num_entries)
        ones = np.ones(self.num_entries)
        shape = (self.num_entries, self.n)
        pick_u = sp.csr_matrix((ones, (picks, self.targets)), shape=shape)
        pick_v = sp.csr_matrix((ones, (picks, self.edge_rows)), shape=shape)
        return pick_u, pick_v, (pick_u - pick_v).tocsr()

    @cached_property
    def edge_mean(self) -> sp.csr_matrix:
        """(n x E) operator averaging edge rows onto their owning node."""
        degrees = self.degrees()
        weights = np.repeat(1.0 / np.maximum(degrees, 1), degrees)
        return sp.csr_matrix(
            (weights, np.arange(self.num_entries), self.row_offsets),
            shape=(self.n, self.num_entries),
        )

    def edge_set(self) -> set[tuple[int, int]]:
        rows = self.edge_rows
        keep = rows < self.targets
        return set(zip(rows[keep].tolist(), self.targets[keep].tolist()))

    def same_as(self, other: "Graph") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.targets, other.targets)
        )

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True, eq=False)
class HopSets:
    """Per node v and hop i in [1, t], the nodes at distance exactly i from v."""

    t: int
    offsets: tuple[np.ndarray, ...]
    members: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return len(self.offsets[0]) - 1

    def hop(self, v: int, i: int) -> np.ndarray:
        if not 1 <= i <= self.t:
            raise ContractError(f"hop {i} outside [1, {self.t}]")
        lo, hi = self.offsets[i - 1][v], self.offsets[i - 1][v + 1]
        return self.members[i - 1][lo:hi]

    def sizes(self, i: int) -> np.ndarray:
        return np.diff(self.offsets[i - 1])

    def mean_operator(self, i: int) -> sp.csr_matrix:
        """Row v averages the exactly-i-hop neighbors of v; empty rows stay zero."""
        sizes = self.sizes(i)
        weights = np.repeat(1.0 / np.maximum(sizes, 1), sizes)
        return sp.csr_matrix(
            (weights, self.members[i - 1], self.offsets[i - 1]), shape=(self.n, self.n)
        )


def build_knn_graph(features, k: int) -> Graph:
    """Edges to each node's k nearest rows (Euclidean), symmetrized by union.

    Distance ties go to the lower node index.
    """
    points = features.data if isinstance(features, Tensor) else np.asarray(features)
    n = points.shape[0]
    if k < 1 or n <= k:
        raise ConfigurationError(f"k-NN needs n > k >= 1, got n={n}, k={k}")
    distances = cdist(points, points)
    np.fill_diagonal(distances, np.inf)
    nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
    sources = np.repeat(np.arange(n), k)
    return Graph.from_edges(n, np.stack([sources, nearest.ravel()], axis=1))


def exact_hop_sets(g: Graph, t: int) -> HopSets:
    """Frontier expansion for every node at once, one sparse product per hop."""
    if t < 1:
        raise ConfigurationError(f"hop count must be >= 1, got {t}")
    adjacency = g.adjacency
    reached = sp.identity(g.n, dtype=np.int64, format="csr")
    frontier = reached
    offsets, members = [], []
    for _ in range(t):
        expanded = (frontier @ adjacency).tocsr()
        expanded.data = np.ones_like(expanded.data)
        fresh = (expanded - expanded.multiply(reached)).tocsr()
        fresh.eliminate_zeros()
        fresh.sort_indices()
        offsets.append(_frozen(fresh.indptr))
        members.append(_frozen(fresh.indices))
        reached = (reached + fresh).tocsr()
        frontier = fresh
    logger.debug("hop sets for %r up to t=%d", g, t)
    return HopSets(t, tuple(offsets), tuple(members))


def bfs_oracle(g: Graph, v: int, t: int) -> list[list[int]]:
    """Textbook breadth-first distance labelling from ``v``; hops 1..t."""
    if not 0 <= v < g.n:
        raise ContractError(f"node {v} outside [0, {g.n})")
    distance = {v: 0}
    queue = deque([v])
    while queue:
        node = queue.popleft()
        if distance[node] == t:
            continue
        for neighbor in g.neighbors(node).tolist():
            if neighbor not in distance:
                distance[neighbor] = distance[node] + 1
                queue.append(neighbor)
    hops = [[] for _ in range(t)]
    for node, d in distance.items():
        if d >= 1:
            hops[d - 1].append(node)
    return [sorted(h) for h in hops]


def induced_subgraph(g: Graph, keep) -> Graph:
    keep = np.asarray(keep, dtype=np.int64)
    if keep.size == 0:
        raise ContractError("induced_subgraph needs at least one node")
    if np.any(np.diff(keep) <= 0):
        raise ContractError("keep must be strictly increasing")
    if keep[0] < 0 or keep[-1] >= g.n:
        raise ContractError(f"keep indices outside [0, {g.n})")
    relabel = np.full(g.n, -1, dtype=np.int64)
    relabel[keep] = np.arange(keep.size)
    offsets = [0]
    targets = []
    for v in keep:
        mapped = relabel[g.neighbors(v)]
        mapped = mapped[mapped >= 0]
        targets.append(mapped)
        offsets.append(offsets[-1] + mapped.size)
    flat = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
    return Graph(int(keep.size), np.asarray(offsets), flat)
