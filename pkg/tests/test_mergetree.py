import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import conftest
from conftest import (
    brute_component_count_uf,
    brute_superlevel,
    brute_sublevel,
    graph_function,
    grid_adjacency,
    series_function,
)
from topolink.mergetree import MergeTree, join_tree, persistence_values, split_tree
from topolink.stgraph import classify_vertex, total_order


def pair_triples(pairs):
    return sorted((p.creator, p.destroyer, p.persistence) for p in pairs
                  if p.destroyer is not None)


def global_pairs(pairs):
    return sorted((p.creator, p.persistence) for p in pairs if p.destroyer is None)


def test_join_tree_path_example():
    # Values [1, 5, 2, 6, 0]: maxima at v1 and v3, merge at v2.
    f = series_function([1.0, 5.0, 2.0, 6.0, 0.0])
    tree, pairs = join_tree(f.graph, f)
    assert pair_triples(pairs) == [(1, 2, 3.0)]
    assert global_pairs(pairs) == [(3, 6.0)]
    assert sorted(tree.node_vertices[tree.leaves]) == [1, 3]
    assert list(tree.node_vertices[tree.roots]) == [4]


def test_join_tree_monotone_path():
    f = series_function([1.0, 2.0, 3.0])
    tree, pairs = join_tree(f.graph, f)
    assert len(pairs) == 1
    assert pairs[0].creator == 2 and pairs[0].destroyer is None
    assert pairs[0].persistence == 2.0


def test_split_tree_path_example():
    f = series_function([1.0, 5.0, 2.0, 6.0, 0.0])
    tree, pairs = split_tree(f.graph, f)
    assert pair_triples(pairs) == [(0, 3, 5.0), (2, 1, 3.0)]
    assert global_pairs(pairs) == [(4, 6.0)]
    assert sorted(tree.node_vertices[tree.leaves]) == [0, 2, 4]


def test_constant_function_single_minimum_by_tie_order():
    f = series_function([2.0, 2.0, 2.0])
    tree, pairs = split_tree(f.graph, f)
    assert len(pairs) == 1
    # The tie order ranks lower indices higher, so the plateau's minimum is
    # the highest-index vertex.
    assert pairs[0].creator == 2
    assert pairs[0].destroyer is None
    assert pairs[0].persistence == 0.0


def test_split_equals_join_of_negated_distinct_values():
    rng = np.random.default_rng(3)
    values = rng.permutation(40).astype(float)  # pairwise distinct
    adjacency = conftest.random_connected_adjacency(40, rng, extra=15)
    f = graph_function(adjacency, values)
    neg = graph_function(adjacency, -values)
    _, split_pairs = split_tree(f.graph, f)
    _, neg_join_pairs = join_tree(neg.graph, neg)
    assert pair_triples(split_pairs) == pair_triples(neg_join_pairs)
    assert global_pairs(split_pairs) == global_pairs(neg_join_pairs)


def test_split_matches_join_of_negated_diagram_under_ties():
    # With plateaus the two constructions may carve a flat region into a
    # different number of zero-persistence extrema, but the diagrams agree
    # away from the diagonal.
    rng = np.random.default_rng(3)
    values = rng.normal(size=40).round(1)
    adjacency = conftest.random_connected_adjacency(40, rng, extra=15)
    f = graph_function(adjacency, values)
    neg = graph_function(adjacency, -values)
    _, split_pairs = split_tree(f.graph, f)
    _, neg_join_pairs = join_tree(neg.graph, neg)
    assert sorted(round(p.persistence, 9) for p in split_pairs if p.persistence > 0) == sorted(
        round(p.persistence, 9) for p in neg_join_pairs if p.persistence > 0)


def test_kway_merge_star_graph():
    # Star: center 0 below three leaves; all three components merge at once.
    adjacency = [(0, 1), (0, 2), (0, 3)]
    f = graph_function(adjacency, [0.0, 5.0, 4.0, 3.0])
    tree, pairs = join_tree(f.graph, f)
    finite = pair_triples(pairs)
    # The two younger creators die at the center; the oldest survives.
    assert finite == [(2, 0, 4.0), (3, 0, 3.0)]
    assert global_pairs(pairs) == [(1, 5.0)]


def test_persistence_values_contents():
    f = series_function([1.0, 5.0, 2.0, 6.0, 0.0])
    tree, _ = join_tree(f.graph, f)
    assert sorted(persistence_values(tree)) == [(1, 5.0, 2.0, 3.0), (3, 6.0, 0.0, 6.0)]


def test_persistence_single_vertex():
    f = series_function([4.0, np.nan])
    tree, pairs = join_tree(f.graph, f)
    assert len(pairs) == 1
    assert pairs[0].persistence == 0.0
    assert persistence_values(tree) == [(0, 4.0, 4.0, 0.0)]


def test_minima_side_diagram_nonnegative_persistence():
    rng = np.random.default_rng(9)
    f = series_function(rng.normal(size=60))
    tree, _ = split_tree(f.graph, f)
    for _, creation, destruction, persistence in persistence_values(tree):
        assert persistence >= 0.0
        assert persistence == pytest.approx(abs(destruction - creation))


def _random_function(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 200))
    style = seed % 3
    if style == 0:
        adjacency = conftest.path_adjacency(n)
    elif style == 1:
        nx = int(rng.integers(2, 14))
        ny = max(2, n // nx)
        n = nx * ny
        adjacency = grid_adjacency(nx, ny)
    else:
        adjacency = conftest.random_connected_adjacency(n, rng, extra=int(rng.integers(0, n // 2)))
    values = rng.normal(size=n)
    if rng.random() < 0.5:
        values = values.round(1)  # force plateaus / ties
    return graph_function(adjacency, values)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_component_count_oracle(seed):
    """Tree arcs crossing theta == brute-force component count, at every
    distinct function value."""
    f = _random_function(seed)
    jt, _ = join_tree(f.graph, f)
    st_, _ = split_tree(f.graph, f)
    for theta in np.unique(f.values):
        members = brute_superlevel(f, theta)
        assert jt.component_count_at(theta) == brute_component_count_uf(f.graph, members)
        members = brute_sublevel(f, theta)
        assert st_.component_count_at(theta) == brute_component_count_uf(f.graph, members)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=30, deadline=None)
def test_pair_counts_match_extrema_counts(seed):
    f = _random_function(seed)
    order = total_order(f)
    jt, jpairs = join_tree(f.graph, f, order)
    st_, spairs = split_tree(f.graph, f)
    kinds = [classify_vertex(f.graph, order, v).kind for v in range(f.graph.n_vertices)
             if f.graph.active[v]]
    # Isolated vertices also create (and close) their own component.
    assert len(jpairs) == kinds.count("maximum") + kinds.count("isolated")
    assert len(spairs) == kinds.count("minimum") + kinds.count("isolated")


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=30, deadline=None)
def test_one_global_pair_per_component_with_full_range(seed):
    f = _random_function(seed)
    tree, pairs = join_tree(f.graph, f)
    active = {int(v) for v in np.flatnonzero(f.graph.active)}
    n_components = brute_component_count_uf(f.graph, active)
    infinite = [p for p in pairs if p.destroyer is None]
    assert len(infinite) == n_components == len(tree.roots)
    if n_components == 1:
        assert infinite[0].persistence == pytest.approx(
            f.values[f.graph.active].max() - f.values[f.graph.active].min())


def test_every_vertex_maps_to_exactly_one_arc():
    rng = np.random.default_rng(5)
    n = 80
    adjacency = conftest.random_connected_adjacency(n, rng, extra=30)
    f = graph_function(adjacency, rng.normal(size=n))
    tree, _ = join_tree(f.graph, f)
    assert (tree.vertex_arc[f.graph.active] >= 0).all()
    assert (tree.vertex_arc[f.graph.active] < tree.n_nodes).all()


def test_stability_under_order_preserving_perturbation():
    """Persistence moves by at most 2 epsilon when every value moves by at
    most epsilon and the total order is unchanged."""
    rng = np.random.default_rng(11)
    n = 120
    values = np.sort(rng.normal(size=n) * 10)[rng.permutation(n)]  # distinct values
    gaps = np.diff(np.sort(values))
    eps = float(gaps.min()) / 4.0
    adjacency = conftest.random_connected_adjacency(n, rng, extra=40)
    f1 = graph_function(adjacency, values)
    f2 = graph_function(adjacency, values + rng.uniform(-eps, eps, size=n))
    assert list(total_order(f1).vertices) == list(total_order(f2).vertices)
    _, pairs1 = join_tree(f1.graph, f1)
    _, pairs2 = join_tree(f2.graph, f2)
    by_creator1 = {p.creator: p.persistence for p in pairs1}
    by_creator2 = {p.creator: p.persistence for p in pairs2}
    assert by_creator1.keys() == by_creator2.keys()
    for creator, pers in by_creator1.items():
        assert abs(by_creator2[creator] - pers) <= 2 * eps + 1e-12


def test_tree_round_trip(tmp_path):
    rng = np.random.default_rng(17)
    n = 50
    adjacency = conftest.random_connected_adjacency(n, rng, extra=20)
    f = graph_function(adjacency, rng.normal(size=n))
    tree, pairs = join_tree(f.graph, f)
    path = tmp_path / "tree.mtre"
    tree.save(path)
    loaded = MergeTree.load(path, f.values)
    assert loaded.kind == tree.kind
    assert np.array_equal(loaded.node_vertices, tree.node_vertices)
    assert np.array_equal(loaded.node_parent, tree.node_parent)
    assert np.array_equal(loaded.creators, tree.creators)
    assert np.array_equal(loaded.pair_end_vertices, tree.pair_end_vertices)
    assert np.array_equal(loaded.pair_infinite, tree.pair_infinite)
    assert np.array_equal(loaded.vertex_arc, tree.vertex_arc)
    assert loaded.pairs(f.values) == pairs
