"""Per-contract feature matrix assembly, encoding, and persistence.

Categoricals expand to one-hot columns plus a dedicated missing indicator;
missing continuous values are replaced by an out-of-range sentinel below the
observed minimum, which tree and margin models can isolate with one split.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import LabeledDataset
from .graph import (
    EdgeMetricsTable,
    NodeMetricsTable,
    YearGraph,
    build_year_graph,
    competitive_clustering,
    coreness,
    edge_aggregates,
    node_metrics,
    project,
)
from .redflags import RedFlagTable

__all__ = [
    "ColumnMeta",
    "FeatureMatrix",
    "RawFeatureTable",
    "SupplierAggregates",
    "YearNetwork",
    "supplier_aggregates",
    "party_aggregates",
    "compute_year_network",
    "assemble",
    "encode",
    "decode_missing_mask",
    "save_feature_matrix",
    "load_feature_matrix",
]

SCHEMA_VERSION = 1
MISSING_TOKEN = "__missing__"


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str            # continuous | onehot | missing_indicator
    sentinel: float | None
    source: str          # domain | network | aggregate

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "sentinel": self.sentinel,
            "source": self.source,
        }


@dataclass
class FeatureMatrix:
    values: np.ndarray              # (n_rows, n_cols) float64, no NaN
    meta: list[ColumnMeta]
    contract_ids: list[str]
    notes: list[str] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return [m.name for m in self.meta]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def column_kinds(self) -> list[str]:
        return [m.kind for m in self.meta]

    def __post_init__(self):
        if np.isnan(self.values).any():
            raise ValueError("encoded feature matrix must not contain NaN")


@dataclass
class RawFeatureTable:
    """Pre-encoding table: continuous columns carry NaN for missing values,
    categorical columns carry None."""

    n_rows: int
    contract_ids: list[str]
    continuous: dict[str, np.ndarray] = field(default_factory=dict)
    categorical: dict[str, list] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)

    def add_continuous(self, name: str, values: np.ndarray, source: str):
        values = np.asarray(values, dtype=float)
        if len(values) != self.n_rows:
            raise ValueError(f"column {name}: length mismatch")
        self.continuous[name] = values
        self.sources[name] = source

    def add_categorical(self, name: str, values: list, source: str):
        if len(values) != self.n_rows:
            raise ValueError(f"column {name}: length mismatch")
        self.categorical[name] = list(values)
        self.sources[name] = source


@dataclass(frozen=True)
class SupplierAggregates:
    n_contracts: int
    avg_cri: float
    prop_recorded_direct: float
    prop_post_direct: float


def party_aggregates(
    dataset: LabeledDataset, cri_values: np.ndarray, year: int, party: str
) -> dict[str, SupplierAggregates]:
    """Annual aggregates per supplier or buyer: contract count, mean CRI, and
    recorded-direct / post-direct shares."""
    rows = dataset.year_index.get(int(year), np.empty(0, dtype=np.int64))
    groups: dict[str, list[int]] = {}
    for i in rows:
        c = dataset.contracts[i]
        key = c.supplier_id if party == "supplier" else c.buyer_id
        groups.setdefault(key, []).append(int(i))
    out = {}
    for key, idx in groups.items():
        contracts = [dataset.contracts[i] for i in idx]
        n = len(contracts)
        direct = sum(1 for c in contracts if c.is_recorded_direct)
        post = sum(1 for c in contracts if c.is_post_direct)
        out[key] = SupplierAggregates(
            n_contracts=n,
            avg_cri=float(cri_values[idx].mean()),
            prop_recorded_direct=direct / n,
            prop_post_direct=post / n,
        )
    return out


def supplier_aggregates(
    dataset: LabeledDataset, cri_values: np.ndarray, year: int
) -> dict[str, SupplierAggregates]:
    return party_aggregates(dataset, cri_values, year, "supplier")


@dataclass
class YearNetwork:
    """All network-derived tables for one year."""

    graph: YearGraph
    bipartite_coreness: np.ndarray          # buyers then suppliers
    bipartite_weighted_coreness: np.ndarray
    supplier_metrics: NodeMetricsTable       # on the supplier projection
    buyer_metrics: NodeMetricsTable          # on the buyer projection
    supplier_clustering: np.ndarray
    buyer_clustering: np.ndarray
    edge_metrics: EdgeMetricsTable
    edge_lookup: dict[tuple[int, int], int]


def compute_year_network(
    dataset: LabeledDataset,
    cri_values: np.ndarray,
    year: int,
    exact_threshold: int = 2000,
    n_pivots: int = 256,
    seed: int = 0,
) -> YearNetwork:
    graph = build_year_graph(dataset, year)
    if graph.n_edges == 0:
        raise ValueError(f"no contracts in year {year}")
    adj = graph.adjacency()
    sup_proj = project(graph, "supplier")
    buy_proj = project(graph, "buyer")
    return YearNetwork(
        graph=graph,
        bipartite_coreness=coreness(adj, weighted=False),
        bipartite_weighted_coreness=coreness(adj, weighted=True),
        supplier_metrics=node_metrics(sup_proj.adjacency(), exact_threshold, n_pivots, seed),
        buyer_metrics=node_metrics(buy_proj.adjacency(), exact_threshold, n_pivots, seed),
        supplier_clustering=competitive_clustering(graph, dataset, "supplier"),
        buyer_clustering=competitive_clustering(graph, dataset, "buyer"),
        edge_metrics=edge_aggregates(graph, dataset, cri_values, exact_threshold, n_pivots, seed),
        edge_lookup=graph.edge_index(),
    )


def _price_deciles(dataset: LabeledDataset) -> np.ndarray:
    """Within-year decile of contract price, 1..10."""
    out = np.empty(len(dataset), dtype=float)
    for year, idx in dataset.year_index.items():
        prices = dataset.prices[idx]
        edges = np.quantile(prices, np.linspace(0.1, 0.9, 9))
        out[idx] = np.searchsorted(edges, prices, side="right") + 1
    return out


_NODE_METRIC_FIELDS = ("degree", "strength", "closeness", "betweenness", "eigenvector")


def assemble(
    dataset: LabeledDataset,
    flags: RedFlagTable,
    networks: dict[int, YearNetwork],
    supplier_aggs: dict[int, dict[str, SupplierAggregates]],
    buyer_aggs: dict[int, dict[str, SupplierAggregates]],
) -> RawFeatureTable:
    """One row per contract joining contract-level flags, its edge metrics,
    and both parties' node metrics and annual aggregates."""
    n = len(dataset)
    for year in dataset.year_index:
        if year not in networks:
            raise ValueError(f"pipeline ordering bug: no network tables for year {year}")
        if year not in supplier_aggs or year not in buyer_aggs:
            raise ValueError(f"pipeline ordering bug: no aggregates for year {year}")

    raw = RawFeatureTable(
        n_rows=n, contract_ids=[c.contract_id for c in dataset.contracts]
    )

    # ---- domain features
    prices = dataset.prices
    raw.add_continuous("log10_price", np.log10(prices + 1.0), "domain")
    raw.add_continuous("price_decile_in_year", _price_deciles(dataset), "domain")
    raw.add_continuous("year", dataset.years.astype(float), "domain")
    raw.add_continuous(
        "rf_benford", np.array([v.rf_benford for v in flags.vectors]), "domain"
    )
    raw.add_continuous(
        "rf_decision_period",
        np.array([v.rf_decision_period for v in flags.vectors]),
        "domain",
    )
    raw.add_continuous(
        "rf_submission_period",
        np.array([v.rf_submission_period for v in flags.vectors]),
        "domain",
    )
    raw.add_continuous(
        "rf_single_bidder",
        np.array(
            [np.nan if v.rf_single_bidder is None else v.rf_single_bidder for v in flags.vectors]
        ),
        "domain",
    )
    raw.add_continuous(
        "rf_procedure_type",
        np.array([v.rf_procedure_type for v in flags.vectors]),
        "domain",
    )
    raw.add_continuous("rf_buyer_dependence", flags.buyer_dependence, "domain")
    raw.add_continuous("cri", flags.cri_values, "domain")
    raw.add_continuous("benford_mad", flags.benford_mad_values, "domain")
    raw.add_continuous("decision_period_days", flags.decision_days, "domain")
    raw.add_continuous("submission_period_days", flags.submission_days, "domain")
    raw.add_continuous(
        "n_bidders",
        np.array([np.nan if c.n_bidders is None else float(c.n_bidders) for c in dataset.contracts]),
        "domain",
    )
    raw.add_categorical("procedure_type", [c.procedure_type for c in dataset.contracts], "domain")
    raw.add_categorical("direct_origin", [c.direct_origin for c in dataset.contracts], "domain")
    raw.add_categorical("supply_type", [c.supply_type for c in dataset.contracts], "domain")
    raw.add_categorical("legal_framework", [c.legal_framework for c in dataset.contracts], "domain")
    raw.add_categorical("supplier_size", [c.supplier_size for c in dataset.contracts], "domain")
    raw.add_categorical("venue", [c.venue for c in dataset.contracts], "domain")

    # ---- network features, joined through each contract's year tables
    net_cols: dict[str, np.ndarray] = {}
    for side in ("supplier", "buyer"):
        for metric in _NODE_METRIC_FIELDS:
            net_cols[f"{side}_proj_{metric}"] = np.full(n, np.nan)
        net_cols[f"{side}_coreness"] = np.full(n, np.nan)
        net_cols[f"{side}_weighted_coreness"] = np.full(n, np.nan)
        net_cols[f"{side}_competitive_clustering"] = np.full(n, np.nan)
    edge_fields = (
        "edge_betweenness",
        "edge_avg_cri",
        "neighborhood_avg_cri",
        "neighborhood_prop_direct",
        "active_weeks",
        "contracts_per_week",
        "spend_per_week",
    )
    for name in edge_fields:
        net_cols[f"edge_{name}" if not name.startswith("edge_") else name] = np.full(n, np.nan)

    for year, idx in dataset.year_index.items():
        net = networks[year]
        graph = net.graph
        nb = graph.n_buyers
        for i in idx:
            c = dataset.contracts[i]
            b = graph.buyer_index[c.buyer_id]
            s = graph.supplier_index[c.supplier_id]
            e = net.edge_lookup[(b, s)]
            for metric in _NODE_METRIC_FIELDS:
                net_cols[f"supplier_proj_{metric}"][i] = getattr(net.supplier_metrics, metric)[s]
                net_cols[f"buyer_proj_{metric}"][i] = getattr(net.buyer_metrics, metric)[b]
            net_cols["supplier_coreness"][i] = net.bipartite_coreness[nb + s]
            net_cols["supplier_weighted_coreness"][i] = net.bipartite_weighted_coreness[nb + s]
            net_cols["buyer_coreness"][i] = net.bipartite_coreness[b]
            net_cols["buyer_weighted_coreness"][i] = net.bipartite_weighted_coreness[b]
            net_cols["supplier_competitive_clustering"][i] = net.supplier_clustering[s]
            net_cols["buyer_competitive_clustering"][i] = net.buyer_clustering[b]
            em = net.edge_metrics
            net_cols["edge_betweenness"][i] = em.edge_betweenness[e]
            net_cols["edge_avg_cri"][i] = em.edge_avg_cri[e]
            net_cols["edge_neighborhood_avg_cri"][i] = em.neighborhood_avg_cri[e]
            net_cols["edge_neighborhood_prop_direct"][i] = em.neighborhood_prop_direct[e]
            net_cols["edge_active_weeks"][i] = em.active_weeks[e]
            net_cols["edge_contracts_per_week"][i] = em.contracts_per_week[e]
            net_cols["edge_spend_per_week"][i] = em.spend_per_week[e]
    for name in sorted(net_cols):
        raw.add_continuous(name, net_cols[name], "network")

    # ---- annual party aggregates
    agg_fields = ("n_contracts", "avg_cri", "prop_recorded_direct", "prop_post_direct")
    for party, table in (("supplier", supplier_aggs), ("buyer", buyer_aggs)):
        cols = {f: np.full(n, np.nan) for f in agg_fields}
        for year, idx in dataset.year_index.items():
            per_id = table[year]
            for i in idx:
                c = dataset.contracts[i]
                key = c.supplier_id if party == "supplier" else c.buyer_id
                agg = per_id[key]
                for f in agg_fields:
                    cols[f][i] = getattr(agg, f)
        for f in agg_fields:
            raw.add_continuous(f"{party}_{f}", cols[f], "aggregate")
    return raw


def _sentinel_for(values: np.ndarray) -> tuple[float, str | None]:
    present = values[~np.isnan(values)]
    if len(present) == 0:
        return 0.0, "all-missing column, sentinel forced to 0"
    lo = float(present.min())
    hi = float(present.max())
    if lo >= 0:
        return lo - 1.0, None
    span = hi - lo
    return (lo - 3.0 * span, None) if span > 0 else (lo - 1.0, None)


def encode(raw: RawFeatureTable) -> FeatureMatrix:
    """Two-pass encoding: statistics, then transform.

    Continuous columns with any missing value get a below-range sentinel and
    keep it in the metadata; categoricals expand to sorted one-hot columns
    plus exactly one missing indicator.
    """
    columns: list[np.ndarray] = []
    meta: list[ColumnMeta] = []
    notes: list[str] = []

    for name in raw.continuous:
        values = raw.continuous[name]
        source = raw.sources[name]
        mask = np.isnan(values)
        if not mask.any():
            columns.append(values.astype(float))
            meta.append(ColumnMeta(name, "continuous", None, source))
            continue
        sentinel, note = _sentinel_for(values)
        if note:
            notes.append(f"{name}: {note}")
        filled = values.copy()
        filled[mask] = sentinel
        columns.append(filled)
        meta.append(ColumnMeta(name, "continuous", sentinel, source))

    for name in raw.categorical:
        values = raw.categorical[name]
        source = raw.sources[name]
        categories = sorted({v for v in values if v is not None})
        for cat in categories:
            col = np.fromiter((1.0 if v == cat else 0.0 for v in values), dtype=float)
            meta.append(ColumnMeta(f"{name}={cat}", "onehot", None, source))
            columns.append(col)
        missing_col = np.fromiter((1.0 if v is None else 0.0 for v in values), dtype=float)
        meta.append(ColumnMeta(f"{name}={MISSING_TOKEN}", "missing_indicator", None, source))
        columns.append(missing_col)

    values = np.column_stack(columns) if columns else np.empty((raw.n_rows, 0))
    return FeatureMatrix(
        values=values, meta=meta, contract_ids=list(raw.contract_ids), notes=notes
    )


def decode_missing_mask(fm: FeatureMatrix) -> dict[str, np.ndarray]:
    """Recover the missingness mask for every source column from metadata."""
    out: dict[str, np.ndarray] = {}
    for j, m in enumerate(fm.meta):
        if m.kind == "continuous" and m.sentinel is not None:
            out[m.name] = fm.values[:, j] == m.sentinel
        elif m.kind == "missing_indicator":
            source_col = m.name.split("=")[0]
            out[source_col] = fm.values[:, j] == 1.0
    return out


def save_feature_matrix(fm: FeatureMatrix, csv_path, manifest_path, extra_manifest: dict | None = None):
    """CSV with header plus a JSON sidecar carrying the column metadata."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["contract_id"] + fm.columns)
        for i in range(fm.n_rows):
            writer.writerow([fm.contract_ids[i]] + [repr(float(v)) for v in fm.values[i]])
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n_rows": fm.n_rows,
        "columns": [m.to_json() for m in fm.meta],
        "notes": fm.notes,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_feature_matrix(csv_path, manifest_path) -> FeatureMatrix:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    meta = [
        ColumnMeta(c["name"], c["kind"], c["sentinel"], c["source"])
        for c in manifest["columns"]
    ]
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[1:] != [m.name for m in meta]:
            raise ValueError("feature CSV header does not match its manifest")
        for parts in reader:
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    values = np.array(rows, dtype=float) if rows else np.empty((0, len(meta)))
    return FeatureMatrix(values=values, meta=meta, contract_ids=ids, notes=manifest.get("notes", []))
