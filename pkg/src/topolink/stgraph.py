"""Spatio-temporal graph, piecewise-linear scalar functions, total order.

A dataset at one resolution lives on a graph whose vertices are
(region, time step) points.  Spatial edges connect adjacent regions within
a time step; temporal edges connect consecutive steps of one region.
Vertex v(x, z) = x + z * n_regions, so a flat value array reshaped to
(m_steps, n_regions) exposes the time axis first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainMismatchError
from .resolution import Resolution, TemporalRes
from .timebase import NOMINAL_DELTA, floor_epoch, step_index, step_start


@dataclass(frozen=True)
class SpatialDomain:
    """Region ids plus undirected adjacency between them."""

    regions: tuple[int, ...]
    adjacency: tuple[tuple[int, int], ...]

    def __post_init__(self):
        ids = set(self.regions)
        if len(ids) != len(self.regions):
            raise DomainMismatchError("duplicate region ids")
        for a, b in self.adjacency:
            if a == b:
                raise DomainMismatchError(f"self-loop on region {a}")
            if a not in ids or b not in ids:
                raise DomainMismatchError(f"adjacency ({a}, {b}) references unknown region")

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def region_index(self) -> dict[int, int]:
        return {rid: i for i, rid in enumerate(self.regions)}

    def adjacency_indices(self) -> np.ndarray:
        """(k, 2) int array of adjacency pairs as region indices, deduplicated."""
        if not self.adjacency:
            return np.empty((0, 2), dtype=np.int64)
        idx = self.region_index
        pairs = {tuple(sorted((idx[a], idx[b]))) for a, b in self.adjacency}
        return np.array(sorted(pairs), dtype=np.int64)

    def neighbor_lists(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.regions]
        for a, b in self.adjacency_indices():
            out[a].append(int(b))
            out[b].append(int(a))
        return [sorted(lst) for lst in out]

    @staticmethod
    def city() -> "SpatialDomain":
        return SpatialDomain(regions=(0,), adjacency=())


@dataclass(frozen=True)
class TemporalDomain:
    """Uniform step grid anchored at t0; month grids step by true calendar
    months and carry the nominal mean-month delta for header purposes."""

    t0: int
    unit: TemporalRes
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise DomainMismatchError("temporal domain needs at least one step")
        if floor_epoch(self.t0, self.unit) != self.t0:
            raise DomainMismatchError(f"t0={self.t0} not aligned to a {self.unit} boundary")

    @property
    def delta(self) -> int:
        return NOMINAL_DELTA[self.unit]

    def step_start(self, z: int) -> int:
        return step_start(self.t0, self.unit, z)

    def step_index(self, epoch: float) -> int:
        return step_index(self.t0, self.unit, epoch)

    @property
    def end(self) -> int:
        return self.step_start(self.steps)


class STGraph:
    """CSR-encoded undirected graph over active (region, step) vertices."""

    def __init__(self, sd: SpatialDomain, td: TemporalDomain, active: np.ndarray,
                 indptr: np.ndarray, indices: np.ndarray):
        self.sd = sd
        self.td = td
        self.active = active
        self.indptr = indptr
        self.indices = indices

    @property
    def n_regions(self) -> int:
        return self.sd.n_regions

    @property
    def m_steps(self) -> int:
        return self.td.steps

    @property
    def n_vertices(self) -> int:
        return self.n_regions * self.m_steps

    @property
    def n_edges(self) -> int:
        return len(self.indices) // 2

    def vertex(self, region: int, step: int) -> int:
        return region + step * self.n_regions

    def step_of(self, v: int) -> int:
        return v // self.n_regions

    def region_of(self, v: int) -> int:
        return v % self.n_regions

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def has_edge(self, a: int, b: int) -> bool:
        row = self.neighbors(a)
        pos = np.searchsorted(row, b)
        return pos < len(row) and row[pos] == b


def build_graph(sd: SpatialDomain, td: TemporalDomain, active: np.ndarray | None = None) -> STGraph:
    """Assemble the spatio-temporal graph, dropping edges at inactive vertices."""
    n, m = sd.n_regions, td.steps
    nv = n * m
    if active is None:
        active = np.ones(nv, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)
        if active.shape != (nv,):
            raise DomainMismatchError(f"active mask has shape {active.shape}, expected ({nv},)")

    adj = sd.adjacency_indices()
    offsets = np.arange(m, dtype=np.int64) * n
    if len(adj):
        su = (adj[:, 0][None, :] + offsets[:, None]).ravel()
        sv = (adj[:, 1][None, :] + offsets[:, None]).ravel()
    else:
        su = sv = np.empty(0, dtype=np.int64)
    if m > 1:
        tu = np.arange(n * (m - 1), dtype=np.int64)
        tv = tu + n
    else:
        tu = tv = np.empty(0, dtype=np.int64)

    src = np.concatenate([su, sv, tu, tv])
    dst = np.concatenate([sv, su, tv, tu])
    keep = active[src] & active[dst]
    src, dst = src[keep], dst[keep]

    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(nv + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return STGraph(sd, td, active, indptr, dst)


@dataclass(frozen=True)
class Provenance:
    dataset: str
    name: str
    kind: str
    resolution: Resolution

    @property
    def key(self) -> str:
        return f"{self.dataset}:{self.name}"


@dataclass
class ScalarFunction:
    """PL function on an STGraph; NaN marks no-data (inactive) vertices."""

    graph: STGraph
    values: np.ndarray
    provenance: Provenance
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.graph.n_vertices,):
            raise DomainMismatchError("value array does not match graph size")
        if not np.all(np.isfinite(self.values[self.graph.active])):
            raise DomainMismatchError("non-finite value at an active vertex")

    def grid(self) -> np.ndarray:
        """(m_steps, n_regions) view of the value array."""
        return self.values.reshape(self.graph.m_steps, self.graph.n_regions)


@dataclass(frozen=True)
class TotalOrder:
    """Strict total order over active vertices.

    Ties in function value are broken by vertex index, lower index ranked
    higher; this is the simulated-perturbation surrogate that turns any PL
    function into one with pairwise-distinct values.
    """

    vertices: np.ndarray  # active vertices, highest first
    rank: np.ndarray      # rank[v]; inactive vertices get the sentinel n_vertices

    def __len__(self) -> int:
        return len(self.vertices)


def total_order(f: ScalarFunction, *, ascending: bool = False) -> TotalOrder:
    """Descending order for join-tree sweeps.

    ``ascending=True`` returns the exact reverse (ties then break toward the
    higher vertex index): both directions are views of the one simulated
    perturbation, which keeps split-tree extrema consistent with the
    vertex classification.
    """
    g = f.graph
    act = np.flatnonzero(g.active)
    vals = f.values[act]
    order = np.lexsort((-act, vals)) if ascending else np.lexsort((act, -vals))
    vertices = act[order]
    rank = np.full(g.n_vertices, g.n_vertices, dtype=np.int64)
    rank[vertices] = np.arange(len(vertices), dtype=np.int64)
    return TotalOrder(vertices=vertices, rank=rank)


@dataclass(frozen=True)
class VertexClass:
    kind: str  # maximum | minimum | regular | saddle | isolated
    multiplicity: int = 1

    def __str__(self) -> str:
        return f"saddle({self.multiplicity})" if self.kind == "saddle" else self.kind


def _link_components(g: STGraph, members: list[int]) -> int:
    """Connected components of the subgraph induced by *members*."""
    if not members:
        return 0
    member_set = set(members)
    seen: set[int] = set()
    comps = 0
    for start in members:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            cur = stack.pop()
            for u in g.neighbors(cur):
                u = int(u)
                if u in member_set and u not in seen:
                    seen.add(u)
                    stack.append(u)
    return comps


def classify_vertex(g: STGraph, order: TotalOrder, v: int) -> VertexClass:
    """Combinatorial critical-point type of an active vertex.

    Upper/lower link membership is decided by the total order, so plateaus
    classify deterministically.
    """
    if not g.active[v]:
        raise DomainMismatchError(f"vertex {v} is inactive")
    rv = order.rank[v]
    upper = [int(u) for u in g.neighbors(v) if order.rank[u] < rv]
    lower = [int(u) for u in g.neighbors(v) if order.rank[u] > rv]
    if not upper and not lower:
        return VertexClass("isolated", 0)
    if not upper:
        return VertexClass("maximum")
    if not lower:
        return VertexClass("minimum")
    cu = _link_components(g, upper)
    cl = _link_components(g, lower)
    if cu == 1 and cl == 1:
        return VertexClass("regular")
    return VertexClass("saddle", max(cu, cl))
