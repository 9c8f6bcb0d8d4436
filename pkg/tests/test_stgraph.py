import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topolink.errors import DomainMismatchError
from topolink.mergetree import join_tree, split_tree
from topolink.resolution import TemporalRes
from topolink.stgraph import SpatialDomain, TemporalDomain, build_graph, classify_vertex, total_order

from conftest import graph_function, grid_adjacency, make_domain, path_adjacency, series_function


def test_graph_sizes_path_of_regions():
    # 3 regions in a path, 2 steps: |V|=6, |E_S|=4, |E_T|=3.
    sd = make_domain(path_adjacency(3), 3)
    td = TemporalDomain(t0=0, unit=TemporalRes.HOUR, steps=2)
    g = build_graph(sd, td)
    assert g.n_vertices == 6
    assert g.n_edges == 4 + 3


def test_city_domain_is_a_time_path():
    g = build_graph(SpatialDomain.city(), TemporalDomain(t0=0, unit=TemporalRes.HOUR, steps=10))
    assert g.n_edges == 9
    assert list(g.neighbors(0)) == [1]
    assert sorted(g.neighbors(5)) == [4, 6]


def test_all_inactive_graph_is_empty_but_valid():
    sd = make_domain(path_adjacency(3), 3)
    td = TemporalDomain(t0=0, unit=TemporalRes.HOUR, steps=2)
    g = build_graph(sd, td, active=np.zeros(6, dtype=bool))
    assert g.n_edges == 0
    assert not g.active.any()


def test_edges_incident_to_inactive_vertices_dropped():
    f = series_function([1.0, np.nan, 3.0, 4.0])
    g = f.graph
    assert list(g.neighbors(0)) == []
    assert list(g.neighbors(2)) == [3]


def test_total_order_tie_break_by_index():
    f = series_function([5.0, 5.0, 3.0])
    order = total_order(f)
    assert list(order.vertices) == [0, 1, 2]


def test_total_order_plain_sort():
    f = series_function([1.0, 2.0, 3.0])
    order = total_order(f)
    assert list(order.vertices) == [2, 1, 0]


def test_total_order_all_equal_is_index_order():
    f = series_function([7.0, 7.0, 7.0, 7.0])
    assert list(total_order(f).vertices) == [0, 1, 2, 3]


def test_classify_path_vertices():
    f = series_function([1.0, 5.0, 2.0, 6.0, 0.0])
    order = total_order(f)
    assert classify_vertex(f.graph, order, 1).kind == "maximum"
    assert classify_vertex(f.graph, order, 3).kind == "maximum"
    assert classify_vertex(f.graph, order, 2).kind == "minimum"
    # Interior vertex with one higher, one lower neighbor is regular.
    f2 = series_function([1.0, 2.0, 3.0])
    assert classify_vertex(f2.graph, total_order(f2), 1).kind == "regular"


def test_classify_grid_saddle():
    # Degree-4 center with alternating higher/lower neighbors, higher ones
    # mutually non-adjacent: saddle of multiplicity 2.
    #   layout (3x3 grid), center = 4; neighbors 1, 3, 5, 7
    vals = np.zeros(9)
    vals[4] = 5.0
    vals[1], vals[7] = 9.0, 8.0   # higher, opposite corners of the cross
    vals[3], vals[5] = 1.0, 2.0   # lower
    vals[0], vals[2], vals[6], vals[8] = 0.5, 0.4, 0.3, 0.2
    f = graph_function(grid_adjacency(3, 3), vals)
    cls = classify_vertex(f.graph, total_order(f), 4)
    assert cls.kind == "saddle"
    assert cls.multiplicity == 2


def test_classify_isolated_vertex():
    f = series_function([1.0, np.nan, 3.0])
    assert classify_vertex(f.graph, total_order(f), 0).kind == "isolated"


def test_classify_rejects_inactive():
    f = series_function([1.0, np.nan, 3.0])
    with pytest.raises(DomainMismatchError):
        classify_vertex(f.graph, total_order(f), 1)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_maxima_match_join_leaves_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    import conftest

    n = int(rng.integers(5, 60))
    adjacency = conftest.random_connected_adjacency(n, rng, extra=int(rng.integers(0, n)))
    values = rng.normal(size=n).round(1)  # coarse values force plateaus
    f = graph_function(adjacency, values)
    order = total_order(f)

    kinds = [classify_vertex(f.graph, order, v).kind for v in range(n)]
    jt, _ = join_tree(f.graph, f, order)
    st_, _ = split_tree(f.graph, f)
    assert kinds.count("maximum") == len(jt.leaves)
    assert kinds.count("minimum") == len(st_.leaves)


def test_classification_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    adjacency = grid_adjacency(4, 4)
    values = rng.normal(size=16)
    f1 = graph_function(adjacency, values)
    f2 = graph_function(adjacency, np.exp(3.0 * values) + 7.0)  # strictly increasing map
    order1, order2 = total_order(f1), total_order(f2)
    assert list(order1.vertices) == list(order2.vertices)
    for v in range(16):
        assert classify_vertex(f1.graph, order1, v) == classify_vertex(f2.graph, order2, v)
