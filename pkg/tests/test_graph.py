import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subaug.graph import (
    GraphError,
    LabelSpec,
    Subgraph,
    SubgraphDataset,
    build_graph,
    induced_adjacency,
    induced_edges,
    subgraph_features,
)


def test_build_path_defaults_to_ones():
    g = build_graph(3, [(0, 1), (1, 2)])
    assert g.neighbors(1).tolist() == [0, 2]
    assert g.features.shape == (3, 1) and np.all(g.features == 1)


def test_build_edgeless():
    g = build_graph(2, [])
    assert g.neighbors(0).tolist() == []
    assert g.num_edges == 0


def test_build_collapses_duplicates():
    g = build_graph(4, [(0, 1), (1, 0), (2, 3)])
    assert g.num_edges == 2
    assert g.edge_list() == [(0, 1), (2, 3)]


@pytest.mark.parametrize(
    "n,edges,features,match",
    [
        (3, [(0, 3)], None, "out of range"),
        (3, [(-1, 0)], None, "out of range"),
        (3, [(1, 1)], None, "self-loop"),
        (3, [(0, 1)], np.ones((2, 1)), "rows"),
        (2, [(0, 1)], np.array([[1.0], [np.nan]]), "non-finite"),
    ],
)
def test_build_rejects(n, edges, features, match):
    with pytest.raises(GraphError, match=match):
        build_graph(n, edges, features)


def test_graph_is_immutable(path4):
    with pytest.raises(ValueError):
        path4.indices[0] = 3
    with pytest.raises(ValueError):
        path4.features[0, 0] = 2.0


def test_check_accepts_built_graph(path4):
    path4.check()


def test_induced_adjacency_examples(path4, triangle):
    assert induced_adjacency(path4, Subgraph((1, 2))).tolist() == [[0, 1], [1, 0]]
    assert induced_adjacency(triangle, Subgraph((0, 1, 2))).tolist() == [[0, 1, 1], [1, 0, 1], [1, 1, 0]]
    assert not induced_adjacency(build_graph(5, []), Subgraph((0, 2, 4))).any()


def test_subgraph_features_examples():
    g = build_graph(4, [], np.eye(4))
    assert subgraph_features(g, Subgraph((2,))).tolist() == [[0, 0, 1, 0]]
    np.testing.assert_array_equal(subgraph_features(g, Subgraph((0, 1, 2, 3))), g.features)
    np.testing.assert_array_equal(subgraph_features(g, Subgraph((1, 3))), g.features[[1, 3]])


def test_subgraph_validation(path4):
    with pytest.raises(GraphError):
        Subgraph(())
    with pytest.raises(GraphError):
        Subgraph((2, 1))
    with pytest.raises(GraphError):
        Subgraph.of([1, 1])
    assert Subgraph.of([3, 0]).node_ids == (0, 3)
    with pytest.raises(GraphError):
        induced_adjacency(path4, Subgraph((1, 4)))


def test_induced_edges_canonical_order():
    a = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    assert induced_edges(a).tolist() == [[0, 1], [0, 2], [1, 2]]


def test_label_spec():
    mc = LabelSpec("multiclass", 3)
    assert mc.check(2) == 2
    with pytest.raises(GraphError):
        mc.check(3)
    ml = LabelSpec("multilabel", 3)
    assert ml.check([2, 0]) == (0, 2)
    with pytest.raises(GraphError):
        ml.check([3])
    assert ml.indicator([(0, 2), ()]).tolist() == [[1, 0, 1], [0, 0, 0]]


def test_dataset_lengths_must_match(path4):
    with pytest.raises(GraphError):
        SubgraphDataset(path4, [Subgraph((0,))], [0, 1], LabelSpec("multiclass", 2))
    with pytest.raises(GraphError):
        SubgraphDataset(path4, [Subgraph((0,))], [0], LabelSpec("multiclass", 2), split=("bogus",))


edge_sets = st.integers(1, 20).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] != e[1]), max_size=60),
    )
)


@settings(max_examples=100, deadline=None)
@given(edge_sets)
def test_edge_list_round_trip(case):
    n, edges = case
    g = build_graph(n, edges)
    g.check()
    assert set(g.edge_list()) == {(min(u, v), max(u, v)) for u, v in edges}


@settings(max_examples=100, deadline=None)
@given(edge_sets, st.data())
def test_induced_is_principal_submatrix(case, data):
    n, edges = case
    g = build_graph(n, edges)
    dense = np.zeros((n, n), dtype=np.int64)
    for u, v in edges:
        dense[u, v] = dense[v, u] = 1
    nodes = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    sub = Subgraph.of(nodes)
    ids = sorted(nodes)
    expected = [[dense[i][j] for j in ids] for i in ids]
    assert induced_adjacency(g, sub).tolist() == expected
