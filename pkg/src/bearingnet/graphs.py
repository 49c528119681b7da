"""Undirected graphs, canonical orientations, and incidence matrices.

Vertices are integers ``0..n-1``. Edges are unordered pairs stored in the
canonical form ``(i, j)`` with ``i < j``, sorted lexicographically. The
canonical orientation directs every edge from its smaller to its larger
vertex, so downstream edge-indexed matrices (bearings, rigidity matrices,
Laplacians) all share one reproducible row order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DuplicateEdgeError,
    SelfLoopError,
    VertexOutOfRangeError,
)


@dataclass(frozen=True)
class Graph:
    """Undirected graph with canonically ordered edge list.

    Attributes:
        n: number of vertices (>= 2).
        edges: tuple of ``(i, j)`` pairs, ``i < j``, lexicographically sorted.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def _adjacency(self) -> tuple[frozenset[int], ...]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return tuple(frozenset(s) for s in adj)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        """Canonical edge -> row index in edge-indexed matrices."""
        return {e: k for k, e in enumerate(self.edges)}

    def neighbors(self, i: int) -> frozenset[int]:
        if not 0 <= i < self.n:
            raise VertexOutOfRangeError(f"vertex {i} not in 0..{self.n - 1}")
        return self._adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    @cached_property
    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in self._adjacency[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n

    def edge_array(self) -> np.ndarray:
        """Edges as an (m, 2) int64 array in canonical order."""
        if self.m == 0:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)


@dataclass(frozen=True)
class OrientedGraph:
    """A graph together with the canonical orientation of each edge.

    ``directed_edges[k] = (tail, head)`` with tail < head, lexicographic order.
    """

    base: Graph
    directed_edges: tuple[tuple[int, int], ...]


def build_graph(n: int, edge_list) -> Graph:
    """Validate an edge list and construct a :class:`Graph`.

    Raises:
        VertexOutOfRangeError: an endpoint is outside ``0..n-1``.
        SelfLoopError: an edge joins a vertex to itself.
        DuplicateEdgeError: the same undirected edge appears twice.
    """
    if n < 2:
        raise ValueError(f"need at least 2 vertices, got n={n}")
    canonical: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < n and 0 <= j < n):
            raise VertexOutOfRangeError(f"edge ({i}, {j}) outside 0..{n - 1}")
        if i == j:
            raise SelfLoopError(f"self-loop at vertex {i}")
        e = (i, j) if i < j else (j, i)
        if e in seen:
            raise DuplicateEdgeError(f"edge {e} listed more than once")
        seen.add(e)
        canonical.append(e)
    canonical.sort()
    return Graph(n=n, edges=tuple(canonical))


def orient(g: Graph) -> OrientedGraph:
    """Canonical orientation: tail = min(i, j), head = max(i, j)."""
    return OrientedGraph(base=g, directed_edges=g.edges)


def incidence_matrix(og: OrientedGraph | Graph) -> np.ndarray:
    """(m, n) incidence matrix: -1 at each tail, +1 at each head.

    Every row sums to zero; for a connected graph the rank is n - 1.
    """
    if isinstance(og, Graph):
        og = orient(og)
    g = og.base
    H = np.zeros((g.m, g.n), dtype=np.float64)
    for k, (tail, head) in enumerate(og.directed_edges):
        H[k, tail] = -1.0
        H[k, head] = 1.0
    return H
