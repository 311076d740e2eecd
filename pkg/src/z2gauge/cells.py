"""Cubical cell complexes on finite rectangular boxes of Z^m.

A k-cell is a unit k-cube identified by its base vertex and a sorted tuple of
k axis directions. Only positively oriented cells are stored; orientation
signs live in the incidence lists. Boxes have free boundary (no periodic
wrap), and cells of dimension k = 0..3 are materialized.

Indexing is lexicographic in (base vertex, axis tuple), so cell indices and
everything derived from them are reproducible bit for bit across runs.
"""

from __future__ import annotations

import itertools
from collections import deque
from typing import Iterable, Sequence

Vertex = tuple[int, ...]


class CellComplex:
    """Indexed cells of a box together with boundary/coboundary incidence.

    Instances are immutable after construction (the private ``_memo`` dict
    only caches derived pure data) and safe to share across threads.
    """

    def __init__(self, m: int, extents: Sequence[int]):
        if not isinstance(m, int) or m < 2:
            raise ValueError(f"lattice dimension must be an integer >= 2, got {m!r}")
        extents = tuple(int(e) for e in extents)
        if len(extents) != m:
            raise ValueError(f"expected {m} extents, got {len(extents)}")
        if any(e < 1 for e in extents):
            raise ValueError(f"every extent must be >= 1, got {extents}")
        self.m = m
        self.extents = extents

        self.vertices: list[Vertex] = [
            v for v in itertools.product(*(range(e) for e in extents))
        ]
        self.vertex_index = {v: i for i, v in enumerate(self.vertices)}
        self.edges = self._enumerate_cells(1)
        self.edge_index = {c: i for i, c in enumerate(self.edges)}
        self.plaquettes = self._enumerate_cells(2)
        self.plaquette_index = {c: i for i, c in enumerate(self.plaquettes)}
        self.cubes = self._enumerate_cells(3)

        self.edge_tail = [self.vertex_index[v] for v, _ in self.edges]
        self.edge_head = [
            self.vertex_index[self._shift(v, axes[0])] for v, axes in self.edges
        ]

        self.boundary2 = [self._plaquette_boundary(c) for c in self.plaquettes]
        self.coboundary1: list[list[tuple[int, int]]] = [[] for _ in self.edges]
        for p, entries in enumerate(self.boundary2):
            for e, s in entries:
                self.coboundary1[e].append((p, s))
        self.boundary3 = [self._cube_boundary(c) for c in self.cubes]

        # Mod-2 fast paths: bitmask of boundary edges per plaquette and of
        # coboundary plaquettes per edge.
        self.plaq_edge_mask = [
            _mask(e for e, _ in entries) for entries in self.boundary2
        ]
        self.edge_plaq_mask = [
            _mask(p for p, _ in entries) for entries in self.coboundary1
        ]

        self._memo: dict = {}

    # -- construction helpers -------------------------------------------------

    def _enumerate_cells(self, k: int) -> list[tuple[Vertex, tuple[int, ...]]]:
        cells = []
        for v in self.vertices:
            for axes in itertools.combinations(range(self.m), k):
                if all(v[a] + 1 <= self.extents[a] - 1 for a in axes):
                    cells.append((v, axes))
        return cells

    def _shift(self, v: Vertex, axis: int, by: int = 1) -> Vertex:
        return tuple(c + by if a == axis else c for a, c in enumerate(v))

    def _plaquette_boundary(self, cell) -> tuple[tuple[int, int], ...]:
        # Oriented traversal of (v + e_a) ^ (v + e_b):
        #   v -> v+a -> v+a+b -> v+b -> v.
        v, (a, b) = cell
        ei = self.edge_index
        return (
            (ei[(v, (a,))], +1),
            (ei[(self._shift(v, a), (b,))], +1),
            (ei[(self._shift(v, b), (a,))], -1),
            (ei[(v, (b,))], -1),
        )

    def _cube_boundary(self, cell) -> tuple[tuple[int, int], ...]:
        # d(I_a x I_b x I_c) expands with alternating signs per removed axis.
        v, axes = cell
        pi = self.plaquette_index
        entries = []
        for i, axis in enumerate(axes):
            rest = tuple(a for a in axes if a != axis)
            far = (-1) ** i
            entries.append((pi[(self._shift(v, axis), rest)], far))
            entries.append((pi[(v, rest)], -far))
        return tuple(entries)

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_plaquettes(self) -> int:
        return len(self.plaquettes)

    @property
    def n_cubes(self) -> int:
        return len(self.cubes)

    def edge_midpoint_doubled(self, e: int) -> Vertex:
        """Midpoint of edge e with all coordinates doubled (stays integral)."""
        v, (a,) = self.edges[e]
        return tuple(2 * c + (1 if i == a else 0) for i, c in enumerate(v))

    def describe(self) -> str:
        return f"m={self.m} extents={'x'.join(str(e) for e in self.extents)}"

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"CellComplex({self.describe()}, cells="
            f"{self.n_vertices}/{self.n_edges}/{self.n_plaquettes}/{self.n_cubes})"
        )


def _mask(bits: Iterable[int]) -> int:
    m = 0
    for b in bits:
        m |= 1 << b
    return m


def build_complex(m: int, extents: Sequence[int]) -> CellComplex:
    """Build the cubical complex of a box with the given per-axis vertex counts."""
    return CellComplex(m, extents)


def plaquette_boundary(cx: CellComplex, p: int) -> list[tuple[int, int]]:
    """The four (edge index, sign) pairs in the oriented boundary of plaquette p."""
    if not 0 <= p < cx.n_plaquettes:
        raise IndexError(f"plaquette index {p} out of range 0..{cx.n_plaquettes - 1}")
    return list(cx.boundary2[p])


def edge_coboundary(cx: CellComplex, e: int) -> list[tuple[int, int]]:
    """The (plaquette index, sign) pairs whose boundary contains edge e.

    The list has at most 2(m-1) entries, with equality for edges away from
    the box boundary.
    """
    if not 0 <= e < cx.n_edges:
        raise IndexError(f"edge index {e} out of range 0..{cx.n_edges - 1}")
    return list(cx.coboundary1[e])


def cell_count(m: int, extents: Sequence[int], k: int) -> int:
    """Closed-form number of k-cells: sum over axis sets of per-axis run counts."""
    extents = tuple(extents)
    total = 0
    for axes in itertools.combinations(range(m), k):
        prod = 1
        for a in range(m):
            prod *= (extents[a] - 1) if a in axes else extents[a]
        total += prod
    return total


def bfs_spanning_tree(cx: CellComplex) -> list[int]:
    """Edge indices of a breadth-first spanning tree rooted at vertex 0.

    Vertices are explored in index order and incident edges in edge-index
    order, so the tree is deterministic. Requires a connected box (always
    true for extents >= 1 on every axis).
    """
    key = "spanning_tree"
    if key in cx._memo:
        return cx._memo[key]
    incident: list[list[tuple[int, int]]] = [[] for _ in cx.vertices]
    for e in range(cx.n_edges):
        t, h = cx.edge_tail[e], cx.edge_head[e]
        incident[t].append((e, h))
        incident[h].append((e, t))
    seen = [False] * cx.n_vertices
    seen[0] = True
    tree: list[int] = []
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for e, w in incident[v]:
            if not seen[w]:
                seen[w] = True
                tree.append(e)
                queue.append(w)
    if not all(seen):
        raise ValueError("box graph is not connected")
    cx._memo[key] = tree
    return tree
