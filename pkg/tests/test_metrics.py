import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgepert import epd, io, metrics
from edgepert.errors import ConvergenceError, GraphValidationError
from edgepert.graph import PerturbationPlan, apply_plan
from oracles import betweenness_brute, floyd_warshall, make_graph, random_graph


def complete(n):
    return make_graph(n, itertools.combinations(range(n), 2))


def star(leaves):
    return make_graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def path(n):
    return make_graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n):
    return make_graph(n, [(i, (i + 1) % n) for i in range(n)])


def relabel(g, perm):
    return make_graph(g.num_nodes, [(perm[u], perm[v]) for u, v in g.edges.tolist()])


# -- global efficiency ----------------------------------------------------

def test_ge_examples():
    assert metrics.global_efficiency(complete(3)) == 1.0
    assert metrics.global_efficiency(path(3)) == pytest.approx(5 / 6)
    assert metrics.global_efficiency(make_graph(2, [])) == 0.0


def test_ge_needs_two_nodes():
    with pytest.raises(GraphValidationError):
        metrics.global_efficiency(make_graph(1, []))


@pytest.mark.parametrize("seed", range(15))
def test_bfs_distances_match_floyd_warshall(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 51)), float(rng.uniform(0.02, 0.2)))
    assert np.array_equal(metrics.all_pairs_distances(g), floyd_warshall(g))


def test_distance_blocks_cover_all_sources():
    g = random_graph(np.random.default_rng(0), 30, 0.1)
    seen = np.concatenate([src for src, _ in metrics.distance_blocks(g, block=7)])
    assert seen.tolist() == list(range(30))


# -- clustering, degrees ----------------------------------------------------

def test_clustering_examples():
    assert metrics.average_clustering(complete(3)) == 1.0
    assert metrics.average_clustering(star(4)) == 0.0
    k4_minus = make_graph(4, [e for e in itertools.combinations(range(4), 2) if e != (2, 3)])
    assert metrics.local_clustering(k4_minus).tolist() == pytest.approx([2 / 3, 2 / 3, 1, 1])
    assert metrics.average_clustering(k4_minus) == pytest.approx(5 / 6)


def test_degree_examples():
    assert metrics.degree_stats(complete(4)) == ({3: 4}, 3.0)
    hist, mean = metrics.degree_stats(star(4))
    assert hist == {1: 4, 4: 1} and mean == pytest.approx(8 / 5)
    assert metrics.degree_stats(make_graph(3, [])) == ({0: 3}, 0.0)


def test_neighbor_degree_examples():
    assert metrics.average_neighbor_degree(cycle(6)) == 2.0
    assert metrics.neighbor_degrees(star(3)).tolist() == [1, 3, 3, 3]
    assert metrics.average_neighbor_degree(star(3)) == 2.5
    assert metrics.neighbor_degrees(make_graph(3, [(0, 1)]))[2] == 0.0


# -- centralities ---------------------------------------------------------

def test_eigenvector_cycle_uniform():
    x, _ = metrics.eigenvector_centrality(cycle(5))
    assert np.allclose(x, 1 / np.sqrt(5))


def test_eigenvector_star_center_dominates():
    x, _ = metrics.eigenvector_centrality(star(5))
    assert x[0] > x[1:].max()
    assert np.allclose(x[1:], x[1])


def test_eigenvector_p3_matches_dense():
    g = path(3)
    x, _ = metrics.eigenvector_centrality(g, tol=1e-12)
    w, v = np.linalg.eigh(g.adjacency.toarray() + np.eye(3))
    top = np.abs(v[:, np.argmax(w)])
    assert np.allclose(x, top, atol=1e-6)


def test_eigenvector_errors():
    with pytest.raises(GraphValidationError):
        metrics.eigenvector_centrality(make_graph(3, []))
    with pytest.raises(ConvergenceError) as err:
        metrics.eigenvector_centrality(path(30), tol=1e-15, max_iters=3)
    assert err.value.last is not None


def test_closeness_examples():
    assert metrics.closeness_centrality(complete(3))[0].tolist() == [1.0, 1.0, 1.0]
    assert metrics.closeness_centrality(path(3))[0][1] == 1.0
    assert metrics.closeness_centrality(make_graph(3, [(0, 1)]))[0][2] == 0.0


def test_betweenness_examples():
    bc, _ = metrics.betweenness_centrality(path(3))
    assert bc.tolist() == [0.0, 1.0, 0.0]
    assert not metrics.betweenness_centrality(complete(5))[0].any()


@pytest.mark.parametrize("seed", range(10))
def test_betweenness_matches_brute_force(seed):
    g = random_graph(np.random.default_rng(seed), 25, 0.15)
    assert np.allclose(metrics.betweenness_centrality(g)[0], betweenness_brute(g), rtol=0, atol=1e-9)


def test_betweenness_block_size_irrelevant():
    g = random_graph(np.random.default_rng(5), 40, 0.1)
    a = metrics.betweenness_centrality(g, block=3)[0]
    b = metrics.betweenness_centrality(g, block=256)[0]
    assert np.allclose(a, b, atol=1e-12)


def test_degree_centrality_examples():
    assert metrics.degree_centrality(complete(4))[0].tolist() == [1.0] * 4
    dc, _ = metrics.degree_centrality(star(4))
    assert dc[0] == 1.0 and dc[1] == 0.25
    assert not metrics.degree_centrality(make_graph(3, []))[0].any()


# -- report -----------------------------------------------------------------

def test_report_k3():
    r = metrics.attribute_report(complete(3))
    assert (r.ge, r.cc, r.dc_mean, r.bc_mean) == (1.0, 1.0, 1.0, 0.0)


def test_report_text_and_json_round_trip():
    r = metrics.attribute_report(star(4))
    assert metrics.AttributeReport.from_dict(r.to_dict()) == r
    assert "dd_hist=1:4,4:1" in r.to_text()


def test_report_survives_save_load(tmp_path):
    g = random_graph(np.random.default_rng(2), 30, 0.1, classes=2, train_frac=0.5, feature_dim=3)
    io.save_graph_dir(g, tmp_path)
    assert metrics.attribute_report(io.load_graph_dir(tmp_path)) == metrics.attribute_report(g)


def test_report_ge_rises_after_attack(sweep_graph):
    plan = epd.make_plan(sweep_graph, "atk", epd.budget_from_epr(sweep_graph, 0.3), seed=0)
    before = metrics.attribute_report(sweep_graph)
    after = metrics.attribute_report(apply_plan(sweep_graph, plan))
    assert metrics.report_delta(before, after)["ge"] > 0


@pytest.mark.parametrize("seed", range(100))
def test_report_isomorphism_invariant(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(5, 30)), 0.2)
    perm = rng.permutation(g.num_nodes)
    a = metrics.attribute_report(g)
    b = metrics.attribute_report(relabel(g, perm))
    assert a.dd_hist == b.dd_hist
    for k, v in a.scalars().items():
        assert abs(v - b.scalars()[k]) <= 1e-12, k


@settings(max_examples=200)
@given(st.integers(0, 10 ** 6), st.integers(3, 20), st.floats(0.05, 0.5))
def test_ge_monotone_under_single_edge_change(seed, n, p):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p)
    ge = metrics.global_efficiency(g)
    non_edges = [e for e in itertools.combinations(range(n), 2) if e not in g.edge_set]
    if non_edges:
        e = non_edges[rng.integers(len(non_edges))]
        assert metrics.global_efficiency(apply_plan(g, PerturbationPlan(adds=[e]))) >= ge
    if g.num_edges:
        e = tuple(g.edges[rng.integers(g.num_edges)].tolist())
        assert metrics.global_efficiency(apply_plan(g, PerturbationPlan(removes=[e]))) <= ge


@settings(max_examples=200)
@given(st.integers(0, 10 ** 6), st.integers(3, 20))
def test_ge_strictly_rises_on_connected_graphs(seed, n):
    rng = np.random.default_rng(seed)
    tree = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    extra = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.1]
    g = make_graph(n, tree + extra)
    non_edges = [e for e in itertools.combinations(range(n), 2) if e not in g.edge_set]
    if not non_edges:
        return
    e = non_edges[rng.integers(len(non_edges))]
    assert metrics.global_efficiency(apply_plan(g, PerturbationPlan(adds=[e]))) > metrics.global_efficiency(g)
