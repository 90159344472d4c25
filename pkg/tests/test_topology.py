import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import complete_edges, cycle_edges, make_graph, random_edges
from ricciopt.curvature import CurvatureField, curvature_field
from ricciopt.errors import UndefinedRateError
from ricciopt.topology import TopologySnapshot, betti, betti_bound, betti_excluding, simplification_rate


def test_examples():
    assert (betti(make_graph(4, cycle_edges(4))[0]).b0, betti(make_graph(4, cycle_edges(4))[0]).b1) == (1, 1)
    tree = make_graph(5, [(0, 1), (1, 2), (1, 3), (3, 4)])[0]
    assert (betti(tree).b0, betti(tree).b1) == (1, 0)
    two = make_graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])[0]
    assert (betti(two).b0, betti(two).b1) == (2, 2)


def test_bound_zero_curvature_degenerates_to_euler():
    graph, m = make_graph(4, cycle_edges(4) + [(0, 2)])
    snap = betti(graph)
    f = CurvatureField.from_kappa(graph, m, np.zeros(graph.edge_count))
    out = betti_bound(snap, f, m)
    assert out.bound_rhs == snap.euler
    assert out.bound_satisfied == (snap.betti_sum <= snap.euler)


def test_bound_k3_is_violated():
    graph, m = make_graph(3, complete_edges(3))
    f = curvature_field(graph, m, 0.0)
    snap = betti(graph)
    out = betti_bound(TopologySnapshot(snap.b0, snap.b1, 3, 3), f, m)
    assert out.bound_rhs == pytest.approx(0.75, abs=1e-6)
    assert out.betti_sum == 2 and out.bound_satisfied is False


def test_bound_tree_satisfied():
    graph, m = make_graph(4, [(0, 1), (1, 2), (2, 3)])
    snap = betti(graph)
    assert snap.euler == 1
    assert betti_bound(snap, curvature_field(graph, m, 0.5), m).bound_satisfied


def test_rate_examples():
    s0 = TopologySnapshot(1, 7, 10, 16)
    assert simplification_rate(s0, s0) == 0.0
    assert simplification_rate(s0, TopologySnapshot(1, 2, 10, 11)) == pytest.approx(0.625)
    with pytest.raises(UndefinedRateError):
        simplification_rate(TopologySnapshot(0, 0, 0, 0), TopologySnapshot(0, 0, 0, 0))


def test_excluding_inserted_edges():
    graph, _ = make_graph(4, [(0, 1), (1, 2), (2, 3), (0, 2)])
    snap = betti_excluding(graph, [(2, 0)])
    assert (snap.b0, snap.b1, snap.edges) == (1, 0, 3)


def test_betti_identity_against_cycle_basis():
    rng = np.random.default_rng(17)
    for _ in range(200):
        V = int(rng.integers(1, 31))
        edges = random_edges(rng, V, float(rng.uniform(0.02, 0.3)))
        graph, _ = make_graph(V, edges)
        snap = betti(graph)
        G = nx.Graph()
        G.add_nodes_from(range(V))
        G.add_edges_from(edges)
        assert snap.b0 == nx.number_connected_components(G)
        assert snap.b1 == len(nx.cycle_basis(G))
        assert snap.b1 == graph.edge_count - V + snap.b0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 15), st.integers(0, 10**6))
def test_edge_removal_changes_exactly_one_number(V, seed):
    rng = np.random.default_rng(seed)
    edges = random_edges(rng, V, 0.35)
    if not edges:
        return
    graph, _ = make_graph(V, edges)
    before = betti(graph)
    k = int(rng.integers(len(edges)))
    G = nx.Graph(edges)
    is_bridge = tuple(sorted(edges[k])) in {tuple(sorted(b)) for b in nx.bridges(G)}
    after = betti(make_graph(V, edges[:k] + edges[k + 1:])[0])
    if is_bridge:
        assert (after.b0, after.b1) == (before.b0 + 1, before.b1)
    else:
        assert (after.b0, after.b1) == (before.b0, before.b1 - 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 10**6))
def test_rate_below_one_for_nonempty_graphs(V, seed):
    rng = np.random.default_rng(seed)
    g0 = betti(make_graph(V, random_edges(rng, V, 0.5))[0])
    g1 = betti(make_graph(V, random_edges(rng, V, 0.5))[0])
    assert simplification_rate(g0, g1) < 1.0
