"""Undirected attributed graphs with canonical edge storage.

Edges are kept in one canonical form throughout the package: each undirected
edge is stored once as (u, v) with u < v, the edge list sorted
lexicographically, self-loops dropped and duplicates collapsed. This fixes
the row ordering of every operator assembled downstream, so identical inputs
produce byte-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class Graph:
    """Simple undirected graph with per-node features and optional labels.

    Treated as immutable after construction; safe to share across workers.
    """

    n: int
    edges: np.ndarray                 # (m, 2) int64, canonical
    features: np.ndarray              # (n, p) float64
    labels: np.ndarray | None = None  # (n,) int64 class ids

    def __post_init__(self):
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[int(u)].append(int(v))
            nbrs[int(v)].append(int(u))
        self._neighbours = [np.asarray(sorted(a), dtype=np.int64) for a in nbrs]

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.num_edges}, p={self.feature_dim})"


def from_edge_list(n: int, raw_edges, features, labels=None) -> Graph:
    """Build a canonical Graph from a possibly messy edge list.

    Both orientations of a pair collapse to one undirected edge, self-loops
    are dropped, and edges come out lexicographically sorted.
    """
    features = np.array(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n:
        raise ValueError(
            f"feature row count mismatch: expected {n} rows, got shape {features.shape}"
        )
    raw = np.asarray(list(raw_edges), dtype=np.int64)
    if raw.size == 0:
        edges = np.zeros((0, 2), dtype=np.int64)
    else:
        if raw.ndim != 2 or raw.shape[1] != 2:
            raise ValueError("raw_edges must be a sequence of (u, v) pairs")
        if raw.min() < 0 or raw.max() >= n:
            raise ValueError("edge endpoint out of range")
        lo = raw.min(axis=1)
        hi = raw.max(axis=1)
        keep = lo != hi  # self-loops dropped
        edges = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
        if edges.size == 0:
            edges = np.zeros((0, 2), dtype=np.int64)
    if labels is not None:
        labels = np.asarray(labels)
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.shape != (n,):
            raise ValueError(f"labels must have length {n}")
        if labels.size and labels.min() < 0:
            raise ValueError("label out of class range")
    features.setflags(write=False)
    edges.setflags(write=False)
    return Graph(n=n, edges=edges, features=features, labels=labels)


def one_hop_neighbourhood(g: Graph, i: int) -> np.ndarray:
    """Ascending ids of the nodes adjacent to i (i itself excluded)."""
    if not 0 <= i < g.n:
        raise ValueError(f"node index {i} out of range [0, {g.n})")
    return g._neighbours[i].copy()


def degree(g: Graph, i: int) -> int:
    if not 0 <= i < g.n:
        raise ValueError(f"node index {i} out of range [0, {g.n})")
    return int(g._neighbours[i].size)


def homophily(g: Graph, labels=None) -> float:
    """Fraction of edges whose endpoints carry the same class label."""
    if labels is None:
        labels = g.labels
    if labels is None:
        raise ValueError("missing labels")
    labels = np.asarray(labels)
    if labels.shape != (g.n,):
        raise ValueError("labels must cover every node")
    if g.num_edges == 0:
        raise ValueError("empty edge set")
    us, vs = g.edges[:, 0], g.edges[:, 1]
    return float(np.mean(labels[us] == labels[vs]))


def graph_laplacian(g: Graph) -> np.ndarray:
    """Classical L = D - A as a dense symmetric n x n matrix."""
    lap = np.zeros((g.n, g.n), dtype=np.float64)
    if g.num_edges:
        us, vs = g.edges[:, 0], g.edges[:, 1]
        lap[us, vs] = -1.0
        lap[vs, us] = -1.0
        deg = np.bincount(g.edges.ravel(), minlength=g.n)
        lap[np.arange(g.n), np.arange(g.n)] = deg
    return lap
