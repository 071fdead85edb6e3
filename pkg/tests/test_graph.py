import numpy as np
import pytest

from etconsensus.errors import (
    IndexOutOfRangeError,
    NonBinaryEntryError,
    NonSquareError,
    SelfLoopError,
)
from etconsensus.graph import build_graph, example1_graph, has_spanning_tree, neighbors


def brute_reachable(adj, root):
    """Independent reachability oracle: repeated edge relaxation."""
    n = adj.shape[0]
    seen = {root}
    for _ in range(n):
        for i in range(n):
            for j in range(n):
                if adj[i, j] and j in seen:
                    seen.add(i)
    return seen


def test_empty_topology():
    g = build_graph(np.zeros((2, 2)))
    assert g.n_agents == 2
    assert g.edges() == []
    assert neighbors(g, 0) == set()
    assert neighbors(g, 1) == set()


def test_single_edge():
    adj = np.zeros((2, 2))
    adj[0, 1] = 1
    g = build_graph(adj)
    assert g.edges() == [(0, 1)]
    assert neighbors(g, 0) == {1}


def test_example1_topology():
    g = example1_graph()
    assert neighbors(g, 1) == {0}
    assert neighbors(g, 2) == {1}
    assert neighbors(g, 3) == {1}
    assert g.follower_edges() == [(1, 0), (2, 1), (3, 1)]


def test_build_errors():
    with pytest.raises(NonSquareError):
        build_graph(np.zeros((2, 3)))
    with pytest.raises(SelfLoopError):
        build_graph(np.eye(2))
    with pytest.raises(NonBinaryEntryError):
        build_graph(np.array([[0, 2], [0, 0]]))


def test_neighbors_out_of_range():
    g = example1_graph()
    with pytest.raises(IndexOutOfRangeError):
        neighbors(g, 4)
    with pytest.raises(IndexOutOfRangeError):
        neighbors(g, -1)


def test_spanning_tree_trivial():
    assert has_spanning_tree(build_graph(np.zeros((1, 1))))
    assert not has_spanning_tree(build_graph(np.zeros((2, 2))))


def test_spanning_tree_example1_matches_bfs_oracle():
    g = example1_graph()
    assert has_spanning_tree(g)
    assert brute_reachable(g.adjacency, 0) == {0, 1, 2, 3}


def test_spanning_tree_against_oracle_random():
    rng = np.random.default_rng(42)
    for _ in range(60):
        n = rng.integers(2, 7)
        adj = (rng.random((n, n)) < 0.3).astype(int)
        np.fill_diagonal(adj, 0)
        g = build_graph(adj)
        expected = any(len(brute_reachable(adj, r)) == n for r in range(n))
        assert has_spanning_tree(g) == expected


def test_spanning_tree_invariant_under_relabeling():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(2, 7))
        adj = (rng.random((n, n)) < 0.35).astype(int)
        np.fill_diagonal(adj, 0)
        perm = np.concatenate([[0], 1 + rng.permutation(n - 1)])
        padj = adj[np.ix_(perm, perm)]
        assert has_spanning_tree(build_graph(adj)) == has_spanning_tree(build_graph(padj))


def test_neighbors_never_contains_self():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        adj = (rng.random((n, n)) < 0.5).astype(int)
        np.fill_diagonal(adj, 0)
        g = build_graph(adj)
        for i in range(n):
            assert i not in neighbors(g, i)
