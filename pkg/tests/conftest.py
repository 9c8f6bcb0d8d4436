"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the library's own data structures:
component counting is a plain BFS over a filtered vertex set, never the
package's union-find.
"""

from __future__ import annotations

import numpy as np
import pytest

from topolink.resolution import Resolution, SpatialRes, TemporalRes
from topolink.stgraph import (
    Provenance,
    ScalarFunction,
    SpatialDomain,
    TemporalDomain,
    build_graph,
)


def make_domain(adjacency: list[tuple[int, int]], n_regions: int) -> SpatialDomain:
    return SpatialDomain(regions=tuple(range(n_regions)), adjacency=tuple(adjacency))


def path_adjacency(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n - 1)]


def grid_adjacency(nx: int, ny: int) -> list[tuple[int, int]]:
    edges = []
    for y in range(ny):
        for x in range(nx):
            r = y * nx + x
            if x + 1 < nx:
                edges.append((r, r + 1))
            if y + 1 < ny:
                edges.append((r, r + nx))
    return edges


def random_connected_adjacency(n: int, rng: np.random.Generator, extra: int = 0) -> list:
    """Random spanning tree plus a few extra edges; sparse, near-planar."""
    edges = {(int(min(i, j)), int(max(i, j)))
             for i, j in ((k, rng.integers(k)) for k in range(1, n))}
    for _ in range(extra):
        a, b = rng.integers(n), rng.integers(n)
        if a != b:
            edges.add((int(min(a, b)), int(max(a, b))))
    return sorted(edges)


def graph_function(adjacency, values, *, n_regions=None, m_steps=1,
                   unit=TemporalRes.HOUR, name="f") -> ScalarFunction:
    """Wrap arbitrary adjacency + values as a one-step spatio-temporal graph
    (or a regions-by-steps grid when m_steps > 1)."""
    values = np.asarray(values, dtype=np.float64)
    if n_regions is None:
        n_regions = len(values) // m_steps
    sd = make_domain(adjacency, n_regions)
    td = TemporalDomain(t0=0, unit=unit, steps=m_steps)
    g = build_graph(sd, td, np.isfinite(values))
    prov = Provenance(dataset="test", name=name, kind="attribute",
                      resolution=Resolution(SpatialRes.NEIGHBORHOOD if n_regions > 1 else SpatialRes.CITY, unit))
    return ScalarFunction(graph=g, values=values, provenance=prov)


def series_function(values, *, unit=TemporalRes.HOUR, t0=0, name="f",
                    dataset="test") -> ScalarFunction:
    values = np.asarray(values, dtype=np.float64)
    sd = SpatialDomain.city()
    td = TemporalDomain(t0=t0, unit=unit, steps=len(values))
    g = build_graph(sd, td, np.isfinite(values))
    prov = Provenance(dataset=dataset, name=name, kind="attribute",
                      resolution=Resolution(SpatialRes.CITY, unit))
    return ScalarFunction(graph=g, values=values, provenance=prov)


# -- independent oracles ------------------------------------------------------

def neighbor_map(graph) -> dict[int, list[int]]:
    return {v: [int(u) for u in graph.neighbors(v)] for v in range(graph.n_vertices)}


def brute_components(graph, members: set[int]) -> int:
    """Connected components of the subgraph induced by *members*, by BFS."""
    seen: set[int] = set()
    comps = 0
    for start in members:
        if start in seen:
            continue
        comps += 1
        frontier = [start]
        seen.add(start)
        while frontier:
            cur = frontier.pop()
            for u in graph.neighbors(cur):
                u = int(u)
                if u in members and u not in seen:
                    seen.add(u)
                    frontier.append(u)
    return comps


def brute_superlevel(f: ScalarFunction, theta: float, strict: bool = False) -> set[int]:
    vals = f.values
    act = f.graph.active
    if strict:
        return {int(v) for v in np.flatnonzero(act & (vals > theta))}
    return {int(v) for v in np.flatnonzero(act & (vals >= theta))}


def brute_sublevel(f: ScalarFunction, theta: float, strict: bool = False) -> set[int]:
    vals = f.values
    act = f.graph.active
    if strict:
        return {int(v) for v in np.flatnonzero(act & (vals < theta))}
    return {int(v) for v in np.flatnonzero(act & (vals <= theta))}


class DictUnionFind:
    """Oracle-side union-find, dict-based and structure-free."""

    def __init__(self):
        self.parent = {}

    def find(self, x):
        root = x
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while self.parent.get(x, x) != x:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def brute_component_count_uf(graph, members: set[int]) -> int:
    """Same count as brute_components but via an independent union-find."""
    uf = DictUnionFind()
    for v in members:
        uf.find(v)
    for v in members:
        for u in graph.neighbors(v):
            if int(u) in members:
                uf.union(v, int(u))
    return len({uf.find(v) for v in members})


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
