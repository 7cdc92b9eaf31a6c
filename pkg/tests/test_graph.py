from collections import deque

import numpy as np
import pytest

from purisk.domain import apply_labels, parse_contracts
from purisk.graph import (
    Adjacency,
    build_year_graph,
    competitive_clustering,
    coreness,
    edge_aggregates,
    edge_betweenness,
    eigenvector_centrality,
    node_metrics,
    project,
)

from test_domain import make_csv, row


def adjacency(n, pairs, weights=None):
    if not pairs:
        return Adjacency.from_edges(n, [], [], [])
    u, v = zip(*pairs)
    w = weights if weights is not None else [1] * len(pairs)
    return Adjacency.from_edges(n, list(u), list(v), list(w))


def graph_from_contracts(rows_spec, year=2020):
    """rows_spec: list of (buyer, supplier) or (buyer, supplier, extra-kwargs)."""
    rows = []
    for i, spec in enumerate(rows_spec):
        buyer, supplier = spec[0], spec[1]
        extra = spec[2] if len(spec) > 2 else {}
        rows.append(row(cid=f"C{i}", buyer=buyer, supplier=supplier, sign=f"{year}-06-01", **extra))
    dataset, report = parse_contracts(make_csv(*rows))
    assert report.n_rejected == 0
    return apply_labels(dataset, []), build_year_graph(apply_labels(dataset, []), year)


# ---------------------------------------------------------------- oracles


def oracle_core_pruning(n, pairs, weights, level):
    """Iteratively remove nodes with strength < level; return survivor set."""
    alive = set(range(n))
    while True:
        strength = {v: 0 for v in alive}
        for (u, v), w in zip(pairs, weights):
            if u in alive and v in alive:
                strength[u] += w
                strength[v] += w
        doomed = {v for v in alive if strength[v] < level}
        if not doomed:
            return alive
        alive -= doomed


def oracle_coreness(n, pairs, weights):
    max_level = sum(weights) + 1
    cores = [0] * n
    for level in range(1, max_level + 1):
        survivors = oracle_core_pruning(n, pairs, weights, level)
        if not survivors:
            break
        for v in survivors:
            cores[v] = level
    return cores


def bfs_all(n, adj_sets, source):
    dist = [-1] * n
    sigma = [0] * n
    dist[source] = 0
    sigma[source] = 1
    q = deque([source])
    order = []
    while q:
        v = q.popleft()
        order.append(v)
        for w in adj_sets[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                q.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
    return dist, sigma


def oracle_edge_betweenness(n, pairs):
    adj_sets = [set() for _ in range(n)]
    for u, v in pairs:
        adj_sets[u].add(v)
        adj_sets[v].add(u)
    dists, sigmas = zip(*(bfs_all(n, adj_sets, s) for s in range(n)))
    values = []
    for u, v in pairs:
        total = 0.0
        for s in range(n):
            for t in range(s + 1, n):
                if dists[s][t] < 0:
                    continue
                st = dists[s][t]
                paths = sigmas[s][t]
                through = 0
                if dists[s][u] >= 0 and dists[t][v] >= 0 and dists[s][u] + 1 + dists[t][v] == st:
                    through += sigmas[s][u] * sigmas[t][v]
                if dists[s][v] >= 0 and dists[t][u] >= 0 and dists[s][v] + 1 + dists[t][u] == st:
                    through += sigmas[s][v] * sigmas[t][u]
                total += through / paths
        values.append(total / (n * (n - 1) / 2))
    return values


def oracle_node_betweenness(n, pairs):
    adj_sets = [set() for _ in range(n)]
    for u, v in pairs:
        adj_sets[u].add(v)
        adj_sets[v].add(u)
    dists, sigmas = zip(*(bfs_all(n, adj_sets, s) for s in range(n)))
    out = []
    for v in range(n):
        total = 0.0
        for s in range(n):
            for t in range(s + 1, n):
                if s == v or t == v or dists[s][t] < 0:
                    continue
                if dists[s][v] >= 0 and dists[t][v] >= 0 and dists[s][v] + dists[v][t] == dists[s][t]:
                    total += sigmas[s][v] * sigmas[t][v] / sigmas[s][t]
        norm = (n - 1) * (n - 2) / 2
        out.append(total / norm if norm else 0.0)
    return out


def random_connected_pairs(rng, n, extra_edges):
    pairs = set()
    nodes = rng.permutation(n)
    for i in range(1, n):
        a, b = int(nodes[rng.integers(0, i)]), int(nodes[i])
        pairs.add((min(a, b), max(a, b)))
    while len(pairs) < n - 1 + extra_edges:
        a, b = rng.integers(0, n, size=2)
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


# ---------------------------------------------------------------- builders


def test_build_year_graph_merges_contracts_into_edges():
    dataset, graph = graph_from_contracts([("B1", "S1"), ("B1", "S1"), ("B1", "S1")])
    assert graph.n_edges == 1
    assert graph.edge_weight.tolist() == [3]


def test_build_year_graph_structure():
    dataset, graph = graph_from_contracts([("B1", "S1"), ("B1", "S2"), ("B2", "S1")])
    assert graph.n_edges == 3
    assert graph.n_buyers == 2
    assert graph.n_suppliers == 2


def test_year_graph_weight_conservation():
    rng = np.random.default_rng(5)
    spec = [(f"B{rng.integers(0, 12)}", f"S{rng.integers(0, 40)}") for _ in range(300)]
    dataset, graph = graph_from_contracts(spec)
    assert graph.edge_weight.sum() == 300


def test_absent_year_gives_empty_graph():
    dataset, _ = graph_from_contracts([("B1", "S1")])
    empty = build_year_graph(dataset, 1999)
    assert empty.n_edges == 0 and empty.n_nodes == 0


# ---------------------------------------------------------------- cores


def test_coreness_star_is_one():
    adj = adjacency(4, [(0, 1), (0, 2), (0, 3)])
    assert coreness(adj, weighted=False).tolist() == [1, 1, 1, 1]


def test_coreness_four_cycle():
    adj = adjacency(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert coreness(adj, weighted=False).tolist() == [2, 2, 2, 2]


def test_weighted_star_score_five():
    pairs = [(0, 1), (0, 2), (0, 3)]
    adj = adjacency(4, pairs, weights=[5, 5, 5])
    assert coreness(adj, weighted=True).tolist() == [5, 5, 5, 5]


@pytest.mark.parametrize("weighted", [False, True])
def test_coreness_matches_pruning_oracle_random(weighted):
    rng = np.random.default_rng(17)
    for trial in range(15):
        n = int(rng.integers(5, 30))
        pairs = random_connected_pairs(rng, n, extra_edges=int(rng.integers(0, 2 * n)))
        weights = [int(rng.integers(1, 6)) if weighted else 1 for _ in pairs]
        adj = adjacency(n, pairs, weights)
        got = coreness(adj, weighted=weighted).tolist()
        assert got == oracle_coreness(n, pairs, weights), (n, pairs, weights)


# ---------------------------------------------------------------- betweenness


def test_single_edge_betweenness_is_one():
    dataset, graph = graph_from_contracts([("B1", "S1")])
    values, info = edge_betweenness(graph)
    assert info["exact"]
    assert values.tolist() == [1.0]


def test_path_edge_betweenness_symmetric():
    dataset, graph = graph_from_contracts([("B1", "S1"), ("B2", "S1")])
    values, _ = edge_betweenness(graph)
    assert values[0] == values[1]


def test_edge_betweenness_matches_oracle_random_bipartite():
    rng = np.random.default_rng(23)
    for _ in range(10):
        nb, ns = int(rng.integers(2, 6)), int(rng.integers(2, 7))
        spec = list(
            {
                (f"B{rng.integers(0, nb)}", f"S{rng.integers(0, ns)}")
                for _ in range(rng.integers(4, 18))
            }
        )
        dataset, graph = graph_from_contracts(sorted(spec))
        values, info = edge_betweenness(graph)
        pairs = [
            (int(b), int(s) + graph.n_buyers)
            for b, s in zip(graph.edge_buyer, graph.edge_supplier)
        ]
        expected = oracle_edge_betweenness(graph.n_nodes, pairs)
        assert info["exact"]
        assert np.allclose(values, expected, atol=1e-12)


def test_node_betweenness_matches_oracle():
    rng = np.random.default_rng(29)
    for _ in range(8):
        n = int(rng.integers(4, 20))
        pairs = random_connected_pairs(rng, n, extra_edges=int(rng.integers(0, n)))
        adj = adjacency(n, pairs)
        table = node_metrics(adj)
        assert np.allclose(table.betweenness, oracle_node_betweenness(n, pairs), atol=1e-12)


def test_betweenness_sampling_above_threshold():
    rng = np.random.default_rng(31)
    n = 40
    pairs = random_connected_pairs(rng, n, extra_edges=30)
    adj = adjacency(n, pairs)
    exact = node_metrics(adj).betweenness
    sampled_table = node_metrics(adj, exact_threshold=10, n_pivots=20, seed=3)
    assert not sampled_table.info["betweenness_exact"]
    assert sampled_table.info["betweenness_pivots"] == 20
    # unbiased-ish estimate: correlation with exact should be strong
    assert np.corrcoef(exact, sampled_table.betweenness)[0, 1] > 0.8


# ---------------------------------------------------------------- projections


def test_projection_simple_shared_buyer():
    dataset, graph = graph_from_contracts([("B1", "S1"), ("B1", "S2")])
    proj = project(graph, "supplier")
    assert proj.n_edges == 1
    assert proj.edge_weight.tolist() == [1]


def test_projection_two_shared_buyers():
    dataset, graph = graph_from_contracts(
        [("B1", "S1"), ("B1", "S2"), ("B2", "S1"), ("B2", "S2")]
    )
    proj = project(graph, "supplier")
    assert proj.n_edges == 1
    assert proj.edge_weight.tolist() == [2]


def test_projection_matches_pairwise_intersection_oracle():
    rng = np.random.default_rng(37)
    spec = sorted(
        {
            (f"B{rng.integers(0, 10)}", f"S{rng.integers(0, 20)}")
            for _ in range(120)
        }
    )
    dataset, graph = graph_from_contracts(spec)
    for side, ids, own, other in [
        ("supplier", graph.supplier_ids, graph.edge_supplier, graph.edge_buyer),
        ("buyer", graph.buyer_ids, graph.edge_buyer, graph.edge_supplier),
    ]:
        proj = project(graph, side)
        neighbor_sets = {
            i: {int(o) for o, s in zip(other, own) if s == i} for i in range(len(ids))
        }
        expected = {}
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                shared = len(neighbor_sets[i] & neighbor_sets[j])
                if shared:
                    expected[(i, j)] = shared
        got = {
            (int(u), int(v)): int(w)
            for u, v, w in zip(proj.edge_u, proj.edge_v, proj.edge_weight)
        }
        assert got == expected


# ---------------------------------------------------------------- node metrics


def test_star_eigenvector_centrality():
    adj = adjacency(4, [(0, 1), (0, 2), (0, 3)])
    table = node_metrics(adj)
    assert table.eigenvector[0] == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(table.eigenvector[1:], 1 / np.sqrt(3), atol=1e-8)


def test_complete_graph_degree_normalized():
    pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
    table = node_metrics(adjacency(5, pairs))
    assert np.allclose(table.degree, 1.0)


def test_disconnected_dyads_closeness_finite():
    table = node_metrics(adjacency(4, [(0, 1), (2, 3)]))
    assert np.allclose(table.closeness, 1.0)
    assert np.all(np.isfinite(table.closeness))


def test_eigenvector_matches_dense_solver_random():
    rng = np.random.default_rng(41)
    for _ in range(10):
        n = int(rng.integers(4, 60))
        pairs = random_connected_pairs(rng, n, extra_edges=int(rng.integers(1, n)))
        weights = [int(rng.integers(1, 7)) for _ in pairs]
        adj = adjacency(n, pairs, weights)
        vec, info = eigenvector_centrality(adj)
        dense = np.zeros((n, n))
        for (u, v), w in zip(pairs, weights):
            dense[u, v] = dense[v, u] = w
        eigvals, eigvecs = np.linalg.eigh(dense)
        top = np.abs(eigvecs[:, -1])
        top /= top.max()
        assert info["converged"]
        assert np.abs(vec - top).max() < 1e-8


def test_eigenvector_edgeless_graph_zero_with_diagnostic():
    vec, info = eigenvector_centrality(adjacency(3, []))
    assert np.all(vec == 0)
    assert "edgeless" in info["note"]


def test_closeness_within_components_oracle():
    rng = np.random.default_rng(43)
    n = 12
    pairs = random_connected_pairs(rng, 8, extra_edges=3)  # nodes 8..11 isolated/disconnected
    pairs.append((8, 9))
    adj = adjacency(n, pairs)
    table = node_metrics(adj)
    # brute force per node
    adj_sets = [set() for _ in range(n)]
    for u, v in pairs:
        adj_sets[u].add(v)
        adj_sets[v].add(u)
    for s in range(n):
        dist, _ = bfs_all(n, adj_sets, s)
        reach = [d for d in dist if d > 0]
        expected = len(reach) / sum(reach) if reach else 0.0
        assert table.closeness[s] == pytest.approx(expected, abs=1e-12)


def test_metrics_invariant_under_relabeling():
    spec = [("B1", "S1"), ("B1", "S2"), ("B2", "S2"), ("B3", "S2"), ("B3", "S3")]
    dataset, graph = graph_from_contracts(spec)
    renamed = [(b.replace("B", "XQ"), s.replace("S", "ZW")) for b, s in spec]
    dataset2, graph2 = graph_from_contracts(renamed)

    t1 = node_metrics(graph.adjacency())
    t2 = node_metrics(graph2.adjacency())
    for b in ("B1", "B2", "B3"):
        i1 = graph.buyer_index[b]
        i2 = graph2.buyer_index[b.replace("B", "XQ")]
        assert t1.eigenvector[i1] == pytest.approx(t2.eigenvector[i2], abs=1e-12)
        assert t1.betweenness[i1] == pytest.approx(t2.betweenness[i2], abs=1e-12)
        assert t1.closeness[i1] == t2.closeness[i2]


# ---------------------------------------------------------------- clustering


def test_competitive_clustering_triangle():
    # S1's competitive neighbors S2, S3 share a buyer, closing the triangle
    spec = [
        ("B1", "S1"),
        ("B1", "S2"),
        ("B2", "S1"),
        ("B2", "S3"),
        ("B3", "S2"),
        ("B3", "S3"),
    ]
    dataset, graph = graph_from_contracts(spec)
    cc = competitive_clustering(graph, dataset, "supplier")
    assert np.allclose(cc, 1.0)


def test_competitive_clustering_no_mutual_edge():
    spec = [("B1", "S1"), ("B1", "S2"), ("B2", "S1"), ("B2", "S3")]
    dataset, graph = graph_from_contracts(spec)
    cc = competitive_clustering(graph, dataset, "supplier")
    s1 = graph.supplier_index["S1"]
    assert cc[s1] == 0.0
    # S2 and S3 have a single neighbor each -> missing
    assert np.isnan(cc[graph.supplier_index["S2"]])


def test_competitive_clustering_ignores_direct_contracts():
    spec = [
        ("B1", "S1"),
        ("B1", "S2", dict(proc="direct", origin="real", pub="", deadline="")),
    ]
    dataset, graph = graph_from_contracts(spec)
    cc = competitive_clustering(graph, dataset, "supplier")
    assert np.all(np.isnan(cc))  # direct edge removed, no projection neighbors left


def test_competitive_clustering_matches_triangle_oracle():
    rng = np.random.default_rng(47)
    spec = sorted(
        {(f"B{rng.integers(0, 8)}", f"S{rng.integers(0, 20)}") for _ in range(90)}
    )
    dataset, graph = graph_from_contracts(spec)
    cc = competitive_clustering(graph, dataset, "supplier")
    proj = project(graph, "supplier")  # all contracts competitive in this fixture
    neighbors = {i: set() for i in range(proj.n_nodes)}
    for u, v in zip(proj.edge_u, proj.edge_v):
        neighbors[int(u)].add(int(v))
        neighbors[int(v)].add(int(u))
    for v in range(proj.n_nodes):
        k = len(neighbors[v])
        if k < 2:
            assert np.isnan(cc[v])
            continue
        tri = sum(len(neighbors[v] & neighbors[u]) for u in neighbors[v]) / 2
        assert cc[v] == pytest.approx(2 * tri / (k * (k - 1)), abs=1e-12)


# ---------------------------------------------------------------- edge metrics


def test_edge_aggregates_weeks_arithmetic():
    spec = [
        ("B1", "S1", dict(sign="2020-01-13")),  # ISO week 3
        ("B1", "S1", dict(sign="2020-01-16")),  # ISO week 3
        ("B1", "S1", dict(sign="2020-02-12")),  # ISO week 7
    ]
    rows = [row(cid=f"C{i}", buyer=b, supplier=s, **extra) for i, (b, s, extra) in enumerate(spec)]
    dataset, _ = parse_contracts(make_csv(*rows))
    dataset = apply_labels(dataset, [])
    graph = build_year_graph(dataset, 2020)
    table = edge_aggregates(graph, dataset, np.array([0.2, 0.4, 0.6]))
    assert table.active_weeks.tolist() == [2]
    assert table.contracts_per_week.tolist() == [1.5]
    assert table.edge_avg_cri[0] == pytest.approx(0.4)
    assert np.isnan(table.neighborhood_avg_cri[0])  # isolated dyad
    assert np.isnan(table.neighborhood_prop_direct[0])


def test_edge_aggregates_neighborhood_value():
    dataset, graph = graph_from_contracts([("B1", "S1"), ("B1", "S2")])
    cri = np.array([0.3, 0.8])
    table = edge_aggregates(graph, dataset, cri)
    e1 = graph.edge_index()[(0, graph.supplier_index["S1"])]
    e2 = graph.edge_index()[(0, graph.supplier_index["S2"])]
    assert table.neighborhood_avg_cri[e1] == pytest.approx(0.8)
    assert table.neighborhood_avg_cri[e2] == pytest.approx(0.3)
