"""Join and split trees with creator-destroyer persistence pairing.

The join tree tracks connected components of super-level sets as the level
sweeps downward; the split tree is the join tree of the negated function.
Construction sweeps vertices in total order, maintaining components in a
union-find structure.  A vertex with no processed neighbors creates a
component (it is an extremum); a vertex joining k >= 2 components becomes a
tree node that destroys all but the oldest creator.  This generalizes the
two-way merge of a Morse function to flat/degenerate data without splitting
saddles first.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainMismatchError
from .stgraph import STGraph, ScalarFunction, TotalOrder, total_order

_MAGIC = b"MTRE"
_VERSION = 1


class UnionFind:
    """Array-backed union-find with path halving and union by size."""

    __slots__ = ("parent", "size")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        """Merge the sets of a and b (assumed distinct roots); returns new root."""
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


@dataclass(frozen=True)
class PersistencePair:
    """Creator extremum paired with the vertex that destroys its component.

    ``destroyer is None`` marks the component's global pair; its persistence
    is the component's full function range.
    """

    creator: int
    destroyer: int | None
    persistence: float


class MergeTree:
    kind: str  # 'join' or 'split'

    def __init__(self, kind, node_vertices, node_parent, node_values,
                 creators, pair_end_vertices, pair_infinite, vertex_arc, n_vertices):
        self.kind = kind
        self.node_vertices = node_vertices
        self.node_parent = node_parent
        self.node_values = node_values
        self.creators = creators                # processing order: best extremum first
        self.pair_end_vertices = pair_end_vertices  # destroyer, or component opposite extremum
        self.pair_infinite = pair_infinite
        self.vertex_arc = vertex_arc            # node whose parent arc covers each vertex
        self.n_vertices = n_vertices

    @property
    def n_nodes(self) -> int:
        return len(self.node_vertices)

    @property
    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.node_parent < 0)

    @property
    def leaves(self) -> np.ndarray:
        """Non-root nodes without children; for a join tree these are the maxima."""
        has_child = np.zeros(self.n_nodes, dtype=bool)
        has_child[self.node_parent[self.node_parent >= 0]] = True
        return np.flatnonzero(~has_child & (self.node_parent >= 0))

    def pair_persistence(self, values: np.ndarray) -> np.ndarray:
        return np.abs(values[self.creators] - values[self.pair_end_vertices])

    def pairs(self, values: np.ndarray) -> list[PersistencePair]:
        pers = self.pair_persistence(values)
        return [
            PersistencePair(
                creator=int(c),
                destroyer=None if inf else int(d),
                persistence=float(p),
            )
            for c, d, inf, p in zip(self.creators, self.pair_end_vertices, self.pair_infinite, pers)
        ]

    def component_count_at(self, theta: float) -> int:
        """Number of super-level (join) or sub-level (split) components at theta."""
        vals = self.node_values
        parent = self.node_parent
        non_root = parent >= 0
        pvals = np.where(non_root, vals[np.clip(parent, 0, None)], 0.0)
        if self.kind == "join":
            crossing = non_root & (vals >= theta) & (pvals < theta)
            at_root = ~non_root & (vals >= theta)
        else:
            crossing = non_root & (vals <= theta) & (pvals > theta)
            at_root = ~non_root & (vals <= theta)
        return int(np.count_nonzero(crossing) + np.count_nonzero(at_root))

    def save(self, path) -> None:
        header = struct.pack(
            "<4sIB q q q",
            _MAGIC,
            _VERSION,
            0 if self.kind == "join" else 1,
            self.n_vertices,
            self.n_nodes,
            len(self.creators),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.node_vertices.astype("<i8").tobytes())
            fh.write(self.node_parent.astype("<i8").tobytes())
            fh.write(self.creators.astype("<i8").tobytes())
            # Pair array: end vertex is negated minus one for global pairs.
            end = np.where(self.pair_infinite, -self.pair_end_vertices - 1, self.pair_end_vertices)
            fh.write(end.astype("<i8").tobytes())
            fh.write(self.vertex_arc.astype("<i8").tobytes())

    @classmethod
    def load(cls, path, values: np.ndarray) -> "MergeTree":
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, kind_code, n_vertices, n_nodes, n_pairs = struct.unpack_from("<4sIB q q q", raw)
        if magic != _MAGIC or version != _VERSION:
            raise DomainMismatchError(f"not a merge tree index: {path}")
        off = struct.calcsize("<4sIB q q q")

        def take(count):
            nonlocal off
            arr = np.frombuffer(raw, dtype="<i8", count=count, offset=off).astype(np.int64)
            off += count * 8
            return arr

        node_vertices = take(n_nodes)
        node_parent = take(n_nodes)
        creators = take(n_pairs)
        end = take(n_pairs)
        vertex_arc = take(n_vertices)
        infinite = end < 0
        pair_end = np.where(infinite, -end - 1, end)
        return cls(
            kind="join" if kind_code == 0 else "split",
            node_vertices=node_vertices,
            node_parent=node_parent,
            node_values=values[node_vertices],
            creators=creators,
            pair_end_vertices=pair_end,
            pair_infinite=infinite,
            vertex_arc=vertex_arc,
            n_vertices=n_vertices,
        )


def _sweep(graph: STGraph, order: TotalOrder) -> tuple:
    """Shared union-find sweep over vertices in the given total order."""
    nv = graph.n_vertices
    sorted_vertices = order.vertices.tolist()
    rank = order.rank.tolist()
    indptr = graph.indptr.tolist()
    indices = graph.indices.tolist()

    uf = UnionFind(nv)
    find = uf.find
    comp_head = [-1] * nv     # node index heading each live component, by UF root
    comp_creator = [-1] * nv  # creator vertex, by UF root
    comp_min = [-1] * nv      # last processed vertex, by UF root
    vertex_arc = [-1] * nv

    nodes: list[int] = []
    node_parent: list[int] = []
    pair_creators: list[int] = []
    pair_ends: list[int] = []

    for v in sorted_vertices:
        rv = rank[v]
        first_root = -1
        extra_roots = None
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            if rank[u] < rv:
                r = find(u)
                if r == first_root:
                    continue
                if first_root < 0:
                    first_root = r
                elif extra_roots is None:
                    extra_roots = [r]
                elif r not in extra_roots:
                    extra_roots.append(r)

        if first_root < 0:
            # No processed neighbor: v is an extremum and creates a component.
            idx = len(nodes)
            nodes.append(v)
            node_parent.append(-1)
            comp_head[v] = idx
            comp_creator[v] = v
            comp_min[v] = v
            vertex_arc[v] = idx
        elif extra_roots is None:
            vertex_arc[v] = comp_head[first_root]
            head, creator = comp_head[first_root], comp_creator[first_root]
            root = uf.union(first_root, v)
            comp_head[root] = head
            comp_creator[root] = creator
            comp_min[root] = v
        else:
            # Merge node: connect every component head to v, keep the creator
            # ranked highest (oldest), pair the rest with destroyer v.
            idx = len(nodes)
            nodes.append(v)
            node_parent.append(-1)
            all_roots = [first_root] + extra_roots
            survivor = min(all_roots, key=lambda r: rank[comp_creator[r]])
            surviving_creator = comp_creator[survivor]
            root = first_root
            for r in all_roots:
                node_parent[comp_head[r]] = idx
                if r != survivor:
                    pair_creators.append(comp_creator[r])
                    pair_ends.append(v)
            for r in extra_roots:
                root = uf.union(root, r)
            root = uf.union(root, v)
            comp_head[root] = idx
            comp_creator[root] = surviving_creator
            comp_min[root] = v
            vertex_arc[v] = idx

    # Close each remaining component: root the tree at its final vertex and
    # emit the component's global pair.
    inf_creators: list[int] = []
    inf_ends: list[int] = []
    seen: set[int] = set()
    for v in reversed(sorted_vertices):
        r = find(v)
        if r in seen:
            continue
        seen.add(r)
        min_v = comp_min[r]
        head = comp_head[r]
        if nodes[head] != min_v:
            idx = len(nodes)
            nodes.append(min_v)
            node_parent.append(-1)
            node_parent[head] = idx
        inf_creators.append(comp_creator[r])
        inf_ends.append(min_v)

    creators = np.array(pair_creators + inf_creators, dtype=np.int64)
    ends = np.array(pair_ends + inf_ends, dtype=np.int64)
    infinite = np.zeros(len(creators), dtype=bool)
    infinite[len(pair_creators):] = True
    # Creators are reported in processing order so threshold scans can stop early.
    creator_order = np.argsort(order.rank[creators], kind="stable")
    return (
        np.array(nodes, dtype=np.int64),
        np.array(node_parent, dtype=np.int64),
        creators[creator_order],
        ends[creator_order],
        infinite[creator_order],
        np.array(vertex_arc, dtype=np.int64),
    )


def _build(graph: STGraph, f: ScalarFunction, order: TotalOrder, kind: str):
    nodes, parent, creators, ends, infinite, vertex_arc = _sweep(graph, order)
    tree = MergeTree(
        kind=kind,
        node_vertices=nodes,
        node_parent=parent,
        node_values=f.values[nodes],
        creators=creators,
        pair_end_vertices=ends,
        pair_infinite=infinite,
        vertex_arc=vertex_arc,
        n_vertices=graph.n_vertices,
    )
    return tree, tree.pairs(f.values)


def join_tree(graph: STGraph, f: ScalarFunction, order: TotalOrder | None = None):
    """Join tree plus persistence pairs; leaves are the maxima."""
    if order is None:
        order = total_order(f)
    return _build(graph, f, order, "join")


def split_tree(graph: STGraph, f: ScalarFunction, order: TotalOrder | None = None):
    """Split tree plus persistence pairs; computed as the join tree of -f."""
    if order is None:
        order = total_order(f, ascending=True)
    return _build(graph, f, order, "split")


def persistence_values(tree: MergeTree) -> list[tuple[int, float, float, float]]:
    """Diagram-ready (extremum vertex, creation value, destruction value,
    persistence) tuples; global pairs report the component's full range."""
    vert_val = {int(v): float(val) for v, val in zip(tree.node_vertices, tree.node_values)}
    out = []
    for c, e in zip(tree.creators, tree.pair_end_vertices):
        creation = vert_val[int(c)]
        destruction = vert_val[int(e)] if int(e) in vert_val else None
        if destruction is None:
            raise DomainMismatchError("pair endpoint missing from node table")
        out.append((int(c), creation, destruction, abs(creation - destruction)))
    return out
