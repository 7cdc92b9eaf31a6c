"""Per-year bipartite buyer-supplier network, projections, and metrics.

All shortest-path based measures treat edges as unweighted hops; weights
(contract counts) enter strength, eigenvector centrality, and the s-core.
Exact computation is used up to ``exact_threshold`` nodes, above which a
fixed-seed pivot sample estimates betweenness.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ._kernels import brandes_accumulate, closeness_within_components, core_peeling
from .domain import LabeledDataset

__all__ = [
    "Adjacency",
    "YearGraph",
    "Projection",
    "NodeMetricsTable",
    "EdgeMetricsTable",
    "build_year_graph",
    "project",
    "coreness",
    "node_metrics",
    "edge_betweenness",
    "competitive_clustering",
    "edge_aggregates",
    "eigenvector_centrality",
    "COMPETITIVE_PROCEDURES",
]

# recorded-direct contracts (both origins) are non-competitive
COMPETITIVE_PROCEDURES = ("open", "at_least_three")

DEFAULT_EXACT_THRESHOLD = 2000
DEFAULT_PIVOTS = 256


@dataclass(frozen=True)
class Adjacency:
    """Undirected simple graph in CSR form, both directions materialized."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    entry_weights: np.ndarray  # aligned to indices
    entry_edge_ids: np.ndarray
    n_edges: int

    @classmethod
    def from_edges(cls, n: int, u, v, w) -> "Adjacency":
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.asarray(w, dtype=np.int64)
        m = len(u)
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        wts = np.concatenate([w, w])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        order = np.argsort(src, kind="stable")
        src, dst, wts, eid = src[order], dst[order], wts[order], eid[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(
            n=n,
            indptr=indptr,
            indices=dst,
            entry_weights=wts,
            entry_edge_ids=eid,
            n_edges=m,
        )

    def sparse(self, weighted: bool = True) -> sp.csr_matrix:
        data = self.entry_weights.astype(float) if weighted else np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def strengths(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.int64)
        np.add.at(out, np.repeat(np.arange(self.n), np.diff(self.indptr)), self.entry_weights)
        return out


@dataclass(frozen=True)
class YearGraph:
    """Bipartite multigraph for one year; one edge per buyer-supplier pair."""

    year: int
    buyer_ids: tuple[str, ...]
    supplier_ids: tuple[str, ...]
    edge_buyer: np.ndarray    # positions into buyer_ids
    edge_supplier: np.ndarray  # positions into supplier_ids
    edge_weight: np.ndarray   # contract counts, >= 1
    edge_spend: np.ndarray
    edge_rows: tuple[np.ndarray, ...]  # dataset row indices per edge

    @property
    def n_buyers(self) -> int:
        return len(self.buyer_ids)

    @property
    def n_suppliers(self) -> int:
        return len(self.supplier_ids)

    @property
    def n_nodes(self) -> int:
        return self.n_buyers + self.n_suppliers

    @property
    def n_edges(self) -> int:
        return len(self.edge_weight)

    @cached_property
    def buyer_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.buyer_ids)}

    @cached_property
    def supplier_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.supplier_ids)}

    def adjacency(self) -> Adjacency:
        """Combined node space: buyers 0..nb-1, suppliers nb..nb+ns-1."""
        return Adjacency.from_edges(
            self.n_nodes,
            self.edge_buyer,
            self.edge_supplier + self.n_buyers,
            self.edge_weight,
        )

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {
            (int(b), int(s)): i
            for i, (b, s) in enumerate(zip(self.edge_buyer, self.edge_supplier))
        }


@dataclass(frozen=True)
class Projection:
    """One-mode graph: same-side nodes sharing at least one counterpart."""

    side: str  # "buyer" or "supplier"
    node_ids: tuple[str, ...]
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_weight: np.ndarray  # number of shared counterparts

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def adjacency(self) -> Adjacency:
        return Adjacency.from_edges(self.n_nodes, self.edge_u, self.edge_v, self.edge_weight)


def build_year_graph(dataset: LabeledDataset, year: int) -> YearGraph:
    """One edge per buyer-supplier pair active in the year; empty graph when
    the year is absent."""
    rows = dataset.year_index.get(int(year), np.empty(0, dtype=np.int64))
    buyers = sorted({dataset.contracts[i].buyer_id for i in rows})
    suppliers = sorted({dataset.contracts[i].supplier_id for i in rows})
    b_index = {b: i for i, b in enumerate(buyers)}
    s_index = {s: i for i, s in enumerate(suppliers)}
    pair_rows: dict[tuple[int, int], list[int]] = {}
    for i in rows:
        c = dataset.contracts[i]
        pair_rows.setdefault((b_index[c.buyer_id], s_index[c.supplier_id]), []).append(int(i))
    keys = sorted(pair_rows)
    edge_buyer = np.array([k[0] for k in keys], dtype=np.int64)
    edge_supplier = np.array([k[1] for k in keys], dtype=np.int64)
    edge_rows = tuple(np.array(pair_rows[k], dtype=np.int64) for k in keys)
    edge_weight = np.array([len(r) for r in edge_rows], dtype=np.int64)
    edge_spend = np.array([dataset.prices[r].sum() for r in edge_rows], dtype=float)
    return YearGraph(
        year=int(year),
        buyer_ids=tuple(buyers),
        supplier_ids=tuple(suppliers),
        edge_buyer=edge_buyer,
        edge_supplier=edge_supplier,
        edge_weight=edge_weight,
        edge_spend=edge_spend,
        edge_rows=edge_rows,
    )


def _project_edges(n_nodes: int, groups: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pairs of nodes sharing a counterpart; weight = number of counterparts."""
    chunks = []
    for members in groups:
        k = len(members)
        if k < 2:
            continue
        iu, iv = np.triu_indices(k, k=1)
        chunks.append(members[iu] * n_nodes + members[iv])
    if not chunks:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    combined = np.concatenate(chunks)
    codes, counts = np.unique(combined, return_counts=True)
    return codes // n_nodes, codes % n_nodes, counts.astype(np.int64)


def project(graph: YearGraph, side: str) -> Projection:
    if side not in ("buyer", "supplier"):
        raise ValueError("side must be 'buyer' or 'supplier'")
    if side == "supplier":
        node_ids = graph.supplier_ids
        own, other = graph.edge_supplier, graph.edge_buyer
        n_other = graph.n_buyers
    else:
        node_ids = graph.buyer_ids
        own, other = graph.edge_buyer, graph.edge_supplier
        n_other = graph.n_suppliers
    groups = [np.unique(own[other == c]) for c in range(n_other)]
    u, v, w = _project_edges(len(node_ids), groups)
    return Projection(side=side, node_ids=node_ids, edge_u=u, edge_v=v, edge_weight=w)


def coreness(graph_or_adjacency, weighted: bool) -> np.ndarray:
    """k-core (unweighted) or s-core on integer strength (weighted)."""
    adj = (
        graph_or_adjacency
        if isinstance(graph_or_adjacency, Adjacency)
        else graph_or_adjacency.adjacency()
    )
    if adj.n == 0:
        return np.empty(0, dtype=np.int64)
    weights = adj.entry_weights if weighted else np.ones(len(adj.indices), dtype=np.int64)
    return core_peeling(adj.indptr, adj.indices, weights.astype(np.int64))


def eigenvector_centrality(
    adj: Adjacency, tol: float = 1e-10, max_iter: int = 200_000
) -> tuple[np.ndarray, dict]:
    """Power iteration on the weighted adjacency (shifted by +I to break
    bipartite oscillation), rescaled so the maximum entry is 1."""
    info = {"converged": True, "iterations": 0, "note": ""}
    if adj.n == 0:
        return np.empty(0), info
    if adj.n_edges == 0:
        info["note"] = "edgeless graph: eigenvector centrality set to zero"
        return np.zeros(adj.n), info
    a = adj.sparse(weighted=True)
    x = np.full(adj.n, 1.0 / adj.n)
    for it in range(1, max_iter + 1):
        nxt = a @ x + x  # (A + I) x
        m = nxt.max()
        nxt /= m
        diff = np.abs(nxt - x).max()
        x = nxt
        if diff <= tol:
            info["iterations"] = it
            break
    else:
        info["converged"] = False
        info["iterations"] = max_iter
        info["note"] = "power iteration hit the iteration cap"
    return x, info


@dataclass(frozen=True)
class NodeMetricsTable:
    """Arrays aligned to the adjacency node order."""

    degree: np.ndarray       # distinct neighbors / (n - 1)
    strength: np.ndarray     # weighted degree
    closeness: np.ndarray    # within-component, in [0, 1]
    betweenness: np.ndarray  # normalized to [0, 1]
    eigenvector: np.ndarray  # max = 1
    info: dict


def _betweenness_sources(n: int, exact_threshold: int, n_pivots: int, seed: int):
    if n <= exact_threshold:
        return np.arange(n, dtype=np.int64), 1.0, True
    rng = np.random.default_rng(seed)
    k = min(n_pivots, n)
    sources = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
    return sources, n / k, False


def node_metrics(
    graph_or_adjacency,
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
    n_pivots: int = DEFAULT_PIVOTS,
    seed: int = 0,
) -> NodeMetricsTable:
    adj = (
        graph_or_adjacency
        if isinstance(graph_or_adjacency, Adjacency)
        else graph_or_adjacency.adjacency()
    )
    n = adj.n
    if n == 0:
        raise ValueError("node metrics on an empty graph")
    degree = adj.degrees() / (n - 1) if n > 1 else np.zeros(n)
    strength = adj.strengths().astype(float)
    closeness = closeness_within_components(adj.indptr, adj.indices)
    sources, scale, exact = _betweenness_sources(n, exact_threshold, n_pivots, seed)
    node_acc, _ = brandes_accumulate(
        adj.indptr, adj.indices, adj.entry_edge_ids, adj.n_edges, sources
    )
    pair_norm = (n - 1) * (n - 2) / 2.0
    betweenness = node_acc * scale / 2.0 / pair_norm if pair_norm > 0 else np.zeros(n)
    eig, info = eigenvector_centrality(adj)
    info = dict(info)
    info["betweenness_exact"] = exact
    info["betweenness_pivots"] = int(len(sources))
    return NodeMetricsTable(
        degree=degree,
        strength=strength,
        closeness=closeness,
        betweenness=betweenness,
        eigenvector=eig,
        info=info,
    )


def edge_betweenness(
    graph: YearGraph,
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
    n_pivots: int = DEFAULT_PIVOTS,
    seed: int = 0,
) -> tuple[np.ndarray, dict]:
    """Per-edge betweenness over unweighted shortest paths, divided by
    n(n-1)/2 node pairs."""
    adj = graph.adjacency()
    n = adj.n
    if graph.n_edges == 0:
        return np.empty(0), {"exact": True, "pivots": 0}
    sources, scale, exact = _betweenness_sources(n, exact_threshold, n_pivots, seed)
    _, edge_acc = brandes_accumulate(
        adj.indptr, adj.indices, adj.entry_edge_ids, adj.n_edges, sources
    )
    pair_norm = n * (n - 1) / 2.0
    values = edge_acc * scale / 2.0 / pair_norm
    return values, {"exact": exact, "pivots": int(len(sources))}


def _competitive_graph(graph: YearGraph, dataset: LabeledDataset) -> YearGraph | None:
    keep = []
    for i in range(graph.n_edges):
        rows = graph.edge_rows[i]
        competitive_rows = [
            r for r in rows if dataset.contracts[r].procedure_type in COMPETITIVE_PROCEDURES
        ]
        if competitive_rows:
            keep.append((i, np.array(competitive_rows, dtype=np.int64)))
    if not keep:
        return None
    idx = np.array([i for i, _ in keep], dtype=np.int64)
    rows = tuple(r for _, r in keep)
    return YearGraph(
        year=graph.year,
        buyer_ids=graph.buyer_ids,
        supplier_ids=graph.supplier_ids,
        edge_buyer=graph.edge_buyer[idx],
        edge_supplier=graph.edge_supplier[idx],
        edge_weight=np.array([len(r) for r in rows], dtype=np.int64),
        edge_spend=np.array([dataset.prices[r].sum() for r in rows]),
        edge_rows=rows,
    )


def competitive_clustering(graph: YearGraph, dataset: LabeledDataset, side: str) -> np.ndarray:
    """Local clustering in the projection induced by competitive contracts.

    NaN for nodes with fewer than two competitive-projection neighbors.
    """
    node_ids = graph.supplier_ids if side == "supplier" else graph.buyer_ids
    out = np.full(len(node_ids), np.nan)
    restricted = _competitive_graph(graph, dataset)
    if restricted is None:
        return out
    proj = project(restricted, side)
    if proj.n_edges == 0:
        return out
    a = sp.csr_matrix(
        (
            np.ones(2 * proj.n_edges),
            (
                np.concatenate([proj.edge_u, proj.edge_v]),
                np.concatenate([proj.edge_v, proj.edge_u]),
            ),
        ),
        shape=(proj.n_nodes, proj.n_nodes),
    )
    k = np.asarray(a.sum(axis=1)).ravel()
    triangles = np.asarray((a @ a).multiply(a).sum(axis=1)).ravel() / 2.0
    with np.errstate(invalid="ignore", divide="ignore"):
        cc = 2.0 * triangles / (k * (k - 1.0))
    eligible = k >= 2
    # restricted projection shares the node ordering of the full graph side
    out[eligible] = cc[eligible]
    return out


@dataclass(frozen=True)
class EdgeMetricsTable:
    """Arrays aligned to the year graph's edge order."""

    edge_betweenness: np.ndarray
    edge_avg_cri: np.ndarray
    neighborhood_avg_cri: np.ndarray      # NaN when the edge has no neighbors
    neighborhood_prop_direct: np.ndarray  # NaN likewise
    active_weeks: np.ndarray              # distinct ISO weeks with a contract
    contracts_per_week: np.ndarray
    spend_per_week: np.ndarray
    betweenness_info: dict


def edge_aggregates(
    graph: YearGraph,
    dataset: LabeledDataset,
    cri_per_contract: np.ndarray,
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
    n_pivots: int = DEFAULT_PIVOTS,
    seed: int = 0,
) -> EdgeMetricsTable:
    m = graph.n_edges
    bt, bt_info = edge_betweenness(graph, exact_threshold, n_pivots, seed)

    cri_sum = np.empty(m)
    cnt = np.empty(m, dtype=np.int64)
    direct_cnt = np.empty(m, dtype=np.int64)
    active_weeks = np.empty(m, dtype=np.int64)
    for i in range(m):
        rows = graph.edge_rows[i]
        cri_sum[i] = cri_per_contract[rows].sum()
        cnt[i] = len(rows)
        direct_cnt[i] = sum(1 for r in rows if dataset.contracts[r].is_recorded_direct)
        weeks = {dataset.contracts[r].sign_date.isocalendar()[:2] for r in rows}
        active_weeks[i] = len(weeks)

    buyer_sum = np.zeros(graph.n_buyers)
    buyer_cnt = np.zeros(graph.n_buyers, dtype=np.int64)
    buyer_direct = np.zeros(graph.n_buyers, dtype=np.int64)
    np.add.at(buyer_sum, graph.edge_buyer, cri_sum)
    np.add.at(buyer_cnt, graph.edge_buyer, cnt)
    np.add.at(buyer_direct, graph.edge_buyer, direct_cnt)
    supplier_sum = np.zeros(graph.n_suppliers)
    supplier_cnt = np.zeros(graph.n_suppliers, dtype=np.int64)
    supplier_direct = np.zeros(graph.n_suppliers, dtype=np.int64)
    np.add.at(supplier_sum, graph.edge_supplier, cri_sum)
    np.add.at(supplier_cnt, graph.edge_supplier, cnt)
    np.add.at(supplier_direct, graph.edge_supplier, direct_cnt)

    neigh_cnt = buyer_cnt[graph.edge_buyer] + supplier_cnt[graph.edge_supplier] - 2 * cnt
    neigh_sum = buyer_sum[graph.edge_buyer] + supplier_sum[graph.edge_supplier] - 2 * cri_sum
    neigh_direct = (
        buyer_direct[graph.edge_buyer] + supplier_direct[graph.edge_supplier] - 2 * direct_cnt
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        neigh_avg_cri = np.where(neigh_cnt > 0, neigh_sum / neigh_cnt, np.nan)
        neigh_prop_direct = np.where(neigh_cnt > 0, neigh_direct / neigh_cnt, np.nan)

    return EdgeMetricsTable(
        edge_betweenness=bt,
        edge_avg_cri=cri_sum / cnt,
        neighborhood_avg_cri=neigh_avg_cri,
        neighborhood_prop_direct=neigh_prop_direct,
        active_weeks=active_weeks,
        contracts_per_week=cnt / active_weeks,
        spend_per_week=graph.edge_spend / active_weeks,
        betweenness_info=bt_info,
    )
