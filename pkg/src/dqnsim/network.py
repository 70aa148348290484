"""Undirected communication graphs and Metropolis mixing matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .numerics import spectral_norm


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on nodes ``0..n-1``.

    ``neighbors[i]`` is the sorted tuple of neighbours of ``i`` (self excluded).
    ``kind`` is one of ``"random"``, ``"cycle"``, ``"star"`` or ``"custom"``;
    ``varrho`` is set for random graphs only.
    """

    n: int
    neighbors: tuple[tuple[int, ...], ...]
    kind: str = "custom"
    varrho: float | None = None

    @classmethod
    def from_edges(cls, n: int, edges, kind: str = "custom", varrho=None) -> "Topology":
        adj: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise ContractViolation(f"edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise ContractViolation(f"self-loop at node {i}")
            adj[i].add(j)
            adj[j].add(i)
        return cls(n, tuple(tuple(sorted(a)) for a in adj), kind, varrho)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in self.neighbors[i] if i < j]

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.neighbors) // 2

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            for j in self.neighbors[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n

    def to_text(self) -> str:
        lines = [str(self.n)] + [f"{i} {j}" for i, j in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Topology":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not rows or len(rows[0]) != 1:
            raise ContractViolation("edge list must start with a line holding n")
        n = int(rows[0][0])
        edges = []
        for k, row in enumerate(rows[1:], start=2):
            if len(row) != 2:
                raise ContractViolation(f"line {k}: expected 'i j', got {' '.join(row)!r}")
            edges.append((int(row[0]), int(row[1])))
        return cls.from_edges(n, edges)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "Topology":
        return cls.from_text(Path(path).read_text())


def target_edge_count(n: int, varrho: float) -> int:
    """Round-to-nearest of ``varrho * n (n - 1) / 2`` (halves round up)."""
    return int(math.floor(varrho * n * (n - 1) / 2 + 0.5))


def _random_tree(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    # decode a uniformly random Pruefer sequence -> uniform labelled tree
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = [int(v) for v in rng.integers(0, n, size=n - 2)]
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = next(u for u in range(n) if degree[u] == 1)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = [u for u in range(n) if degree[u] == 1]
    edges.append((u, w))
    return edges


def random_connected_graph(n: int, varrho: float, seed: int) -> Topology:
    """Connected random graph with ``round(varrho n (n-1) / 2)`` edges.

    A uniform random spanning tree guarantees connectivity; the remaining
    edges are drawn uniformly from the non-edges. Same ``(n, varrho, seed)``
    gives the same edge set.
    """
    if n < 2:
        raise ContractViolation("random graph needs n >= 2")
    if not 0.0 < varrho <= 1.0:
        raise ContractViolation(f"connectivity ratio must lie in (0, 1], got {varrho}")
    target = target_edge_count(n, varrho)
    if target < n - 1:
        min_ratio = 2.0 / n
        raise ContractViolation(
            f"varrho={varrho} gives {target} edges but a connected graph on {n} nodes "
            f"needs {n - 1}; use varrho >= {min_ratio:.6g}"
        )
    rng = np.random.default_rng(seed)
    tree = _random_tree(n, rng)
    present = set(tree)
    rest = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in present]
    extra = rng.choice(len(rest), size=target - len(tree), replace=False) if target > len(tree) else []
    edges = tree + [rest[int(k)] for k in extra]
    return Topology.from_edges(n, edges, kind="random", varrho=varrho)


def cycle_graph(n: int) -> Topology:
    if n < 3:
        raise ContractViolation(f"cycle graph needs n >= 3, got {n}")
    return Topology.from_edges(n, [(i, (i + 1) % n) for i in range(n)], kind="cycle")


def star_graph(n: int) -> Topology:
    if n < 2:
        raise ContractViolation(f"star graph needs n >= 2, got {n}")
    return Topology.from_edges(n, [(0, i) for i in range(1, n)], kind="star")


@dataclass(frozen=True)
class MixingMatrix:
    W: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def sigma(self) -> float:
        return consensus_contraction(self.W)


def metropolis_weights(t: Topology) -> MixingMatrix:
    """``w_ij = 1 / (1 + max(deg_i, deg_j))`` on edges, diagonal fills rows to 1."""
    if not t.is_connected():
        raise ContractViolation("Metropolis weights need a connected topology")
    W = np.zeros((t.n, t.n))
    for i, j in t.edges:
        W[i, j] = W[j, i] = 1.0 / (1.0 + max(t.degree(i), t.degree(j)))
    for i in range(t.n):
        W[i, i] = 1.0 - (W[i].sum() - W[i, i])
    W.setflags(write=False)
    return MixingMatrix(W)


def consensus_contraction(W: np.ndarray) -> float:
    """``sigma = || W - (1/n) 1 1^T ||_2``."""
    n = W.shape[0]
    return spectral_norm(W - np.full((n, n), 1.0 / n))


def build_topology(kind: str, n: int, varrho: float | None = None, seed: int = 0) -> Topology:
    if kind == "random":
        if varrho is None:
            raise ContractViolation("random topology needs a connectivity ratio")
        return random_connected_graph(n, varrho, seed)
    if kind == "cycle":
        return cycle_graph(n)
    if kind == "star":
        return star_graph(n)
    raise ContractViolation(f"unknown topology kind {kind!r}")
