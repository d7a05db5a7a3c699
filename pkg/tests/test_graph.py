import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sals.graph import LabelSet, NodeFeatures, SplitMask, build_graph, neighbors


def rows(g):
    return {i: neighbors(g, i).tolist() for i in range(g.num_nodes)}


def test_path_graph():
    g = build_graph([(0, 1), (1, 2)], 3)
    assert rows(g) == {0: [1], 1: [0, 2], 2: [1]}
    assert g.num_edges == 2


def test_duplicates_and_self_loops_dropped():
    g = build_graph([(0, 1), (1, 0), (0, 0)], 2)
    assert rows(g) == {0: [1], 1: [0]}
    assert g.num_edges == 1


def test_isolated_and_star():
    g = build_graph([(0, k) for k in range(1, 6)], 7)
    assert neighbors(g, 6).size == 0
    assert neighbors(g, 0).tolist() == [1, 2, 3, 4, 5]


def test_errors():
    with pytest.raises(ValueError):
        build_graph([], 0)
    with pytest.raises(IndexError):
        build_graph([(0, 3)], 3)
    with pytest.raises(IndexError):
        neighbors(build_graph([(0, 1)], 2), 2)


def test_csr_layout_invariants():
    g = build_graph([(3, 1), (0, 2), (2, 1), (1, 3)], 5)
    assert g.row_offsets[0] == 0 and g.row_offsets[-1] == len(g.neighbor_ids)
    assert np.all(np.diff(g.row_offsets) >= 0)
    for i in range(g.num_nodes):
        nb = neighbors(g, i)
        assert np.all(np.diff(nb) > 0)
    with pytest.raises(ValueError):
        g.neighbor_ids[0] = 4


edge_lists = st.integers(1, 25).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             max_size=60)))


@settings(max_examples=150, deadline=None)
@given(edge_lists)
def test_symmetry_roundtrip_degree_sum(case):
    n, edges = case
    g = build_graph(edges, n)
    adj = {i: set(neighbors(g, i).tolist()) for i in range(n)}
    for i in range(n):
        assert i not in adj[i]
        for j in adj[i]:
            assert i in adj[j]
    expected = {tuple(sorted(e)) for e in edges if e[0] != e[1]}
    assert {tuple(e) for e in g.edge_list().tolist()} == expected
    assert g.degrees().sum() == 2 * g.num_edges
    again = build_graph(g.edge_list(), n)
    assert np.array_equal(again.neighbor_ids, g.neighbor_ids)


def test_label_set_validation():
    with pytest.raises(ValueError):
        LabelSet([0, 2], 2)
    with pytest.raises(ValueError):
        LabelSet([0, 0], 1)
    labels = LabelSet([0, 1, -1], 2)
    with pytest.raises(ValueError, match="label"):
        labels.check_against(SplitMask([0, 0, 0]))
    with pytest.raises(ValueError, match="no TRAIN"):
        LabelSet([0, 0, 1], 2).check_against(SplitMask([0, 0, 1]))
    LabelSet([0, 1, 1], 2).check_against(SplitMask([0, 0, 2]))


def test_node_features_finite():
    with pytest.raises(ValueError):
        NodeFeatures([[1.0, np.nan]])
    assert NodeFeatures([[1, 2], [3, 4]]).dim == 2
