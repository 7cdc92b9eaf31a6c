import numpy as np
import pytest

from purisk.domain import apply_labels, parse_contracts
from purisk.features import (
    MISSING_TOKEN,
    RawFeatureTable,
    decode_missing_mask,
    encode,
    load_feature_matrix,
    party_aggregates,
    save_feature_matrix,
    supplier_aggregates,
)
from purisk.pipeline import FeatureConfig, build_features
from purisk.redflags import compute_contract_red_flags

from test_domain import make_csv, row


def dataset_from(rows):
    dataset, report = parse_contracts(make_csv(*rows))
    assert report.n_rejected == 0
    return apply_labels(dataset, [])


# ------------------------------------------------------------- aggregates


def test_supplier_aggregates_avg_cri():
    dataset = dataset_from(
        [
            row(cid="C1", supplier="S1"),
            row(cid="C2", supplier="S1"),
            row(cid="C3", supplier="S2"),
        ]
    )
    cri = np.array([0.2, 0.6, 0.9])
    aggs = supplier_aggregates(dataset, cri, 2020)
    assert aggs["S1"].avg_cri == pytest.approx(0.4)
    assert aggs["S1"].n_contracts == 2
    assert aggs["S2"].n_contracts == 1


def test_supplier_aggregates_direct_proportions():
    direct = dict(proc="direct", origin="real", pub="", deadline="")
    post = dict(proc="direct", origin="post_open", pub="", deadline="")
    dataset = dataset_from(
        [
            row(cid="C1", supplier="S1", **direct),
            row(cid="C2", supplier="S1", **post),
            row(cid="C3", supplier="S1", **direct),
            row(cid="C4", supplier="S1"),
        ]
    )
    aggs = supplier_aggregates(dataset, np.zeros(4), 2020)
    assert aggs["S1"].prop_recorded_direct == pytest.approx(0.75)
    assert aggs["S1"].prop_post_direct == pytest.approx(0.25)
    assert aggs["S1"].prop_post_direct <= aggs["S1"].prop_recorded_direct


def test_aggregates_are_annual():
    dataset = dataset_from(
        [
            row(cid="C1", supplier="S1", sign="2019-05-01"),
            row(cid="C2", supplier="S1", sign="2020-05-01"),
        ]
    )
    aggs_2019 = supplier_aggregates(dataset, np.array([0.1, 0.9]), 2019)
    assert aggs_2019["S1"].n_contracts == 1
    assert aggs_2019["S1"].avg_cri == pytest.approx(0.1)


def test_buyer_aggregates_group_by_buyer():
    dataset = dataset_from(
        [row(cid="C1", buyer="B1"), row(cid="C2", buyer="B1"), row(cid="C3", buyer="B2")]
    )
    aggs = party_aggregates(dataset, np.array([0.0, 1.0, 0.4]), 2020, "buyer")
    assert aggs["B1"].avg_cri == pytest.approx(0.5)


# ------------------------------------------------------------- encoding


def test_encode_onehot_with_missing_indicator():
    raw = RawFeatureTable(n_rows=4, contract_ids=list("abcd"))
    raw.add_categorical("venue", ["north", "south", None, "east"], "domain")
    fm = encode(raw)
    assert fm.columns == [
        "venue=east",
        "venue=north",
        "venue=south",
        f"venue={MISSING_TOKEN}",
    ]
    assert fm.values[:, 3].tolist() == [0.0, 0.0, 1.0, 0.0]
    kinds = {m.name: m.kind for m in fm.meta}
    assert kinds[f"venue={MISSING_TOKEN}"] == "missing_indicator"


def test_encode_categorical_without_missing_still_has_indicator():
    raw = RawFeatureTable(n_rows=3, contract_ids=list("abc"))
    raw.add_categorical("proc", ["open", "direct", "open"], "domain")
    fm = encode(raw)
    assert f"proc={MISSING_TOKEN}" in fm.columns
    assert fm.column(f"proc={MISSING_TOKEN}").sum() == 0


def test_encode_sentinel_for_zero_bounded_column():
    raw = RawFeatureTable(n_rows=3, contract_ids=list("abc"))
    raw.add_continuous("closeness", np.array([0.4, np.nan, 0.9]), "network")
    fm = encode(raw)
    meta = fm.meta[0]
    assert meta.sentinel == pytest.approx(-0.6)  # min - 1
    assert fm.values[1, 0] == pytest.approx(-0.6)


def test_encode_sentinel_negative_column_uses_range_rule():
    raw = RawFeatureTable(n_rows=4, contract_ids=list("abcd"))
    raw.add_continuous("zscore", np.array([-2.0, 2.0, np.nan, 0.0]), "domain")
    fm = encode(raw)
    assert fm.meta[0].sentinel == pytest.approx(-2.0 - 3 * 4.0)


def test_encode_no_missing_column_unchanged():
    raw = RawFeatureTable(n_rows=3, contract_ids=list("abc"))
    values = np.array([1.0, 5.0, 2.0])
    raw.add_continuous("price", values, "domain")
    fm = encode(raw)
    assert fm.meta[0].sentinel is None
    assert np.array_equal(fm.values[:, 0], values)


def test_encode_all_missing_column_notes_diagnostic():
    raw = RawFeatureTable(n_rows=2, contract_ids=list("ab"))
    raw.add_continuous("ghost", np.array([np.nan, np.nan]), "network")
    fm = encode(raw)
    assert fm.meta[0].sentinel == 0.0
    assert any("all-missing" in n for n in fm.notes)


def test_missingness_mask_round_trip():
    raw = RawFeatureTable(n_rows=5, contract_ids=list("abcde"))
    cont = np.array([0.1, np.nan, 0.3, np.nan, 0.5])
    raw.add_continuous("metric", cont, "network")
    raw.add_categorical("kind", ["x", None, "y", "x", None], "domain")
    fm = encode(raw)
    masks = decode_missing_mask(fm)
    assert masks["metric"].tolist() == np.isnan(cont).tolist()
    assert masks["kind"].tolist() == [False, True, False, False, True]


# ------------------------------------------------------------- assembly


def small_dataset():
    direct = dict(proc="direct", origin="real", pub="", deadline="", bidders="")
    return dataset_from(
        [
            row(cid="C1", buyer="B1", supplier="S1", sign="2020-01-13"),
            row(cid="C2", buyer="B1", supplier="S1", sign="2020-01-16"),
            row(cid="C3", buyer="B1", supplier="S2", sign="2020-02-10", **direct),
            row(cid="C4", buyer="B2", supplier="S2", sign="2020-03-10"),
            row(cid="C5", buyer="B2", supplier="S3", sign="2020-03-12", bidders="1"),
        ]
    )


def test_single_contract_dataset_builds_one_row():
    dataset = dataset_from([row(cid="C1")])
    build = build_features(dataset)
    assert build.matrix.n_rows == 1
    # trivial dyad: projections are single nodes
    assert build.matrix.column("supplier_proj_degree")[0] == 0.0
    assert build.matrix.column("edge_betweenness")[0] == 1.0


def test_same_edge_contracts_share_edge_columns():
    dataset = small_dataset()
    build = build_features(dataset)
    fm = build.matrix
    ids = fm.contract_ids
    i1, i2 = ids.index("C1"), ids.index("C2")
    for col in (
        "edge_betweenness",
        "edge_avg_cri",
        "edge_active_weeks",
        "edge_spend_per_week",
        "supplier_coreness",
    ):
        assert fm.column(col)[i1] == fm.column(col)[i2]
    assert fm.column("log10_price")[i1] == fm.column("log10_price")[i2]  # same price here
    assert fm.column("rf_decision_period")[i1] == fm.column("rf_decision_period")[i2]


def test_schema_stable_across_runs():
    dataset = small_dataset()
    b1 = build_features(dataset)
    b2 = build_features(dataset)
    assert b1.matrix.columns == b2.matrix.columns
    assert np.array_equal(b1.matrix.values, b2.matrix.values)


def test_assemble_missing_year_network_is_hard_error():
    from purisk.features import assemble

    dataset = small_dataset()
    flags = compute_contract_red_flags(dataset)
    with pytest.raises(ValueError, match="pipeline ordering bug"):
        assemble(dataset, flags, {}, {}, {})


def test_paper_visible_features_have_exactly_one_column():
    dataset = small_dataset()
    fm = build_features(dataset).matrix
    visible = [
        "supplier_coreness",
        "supplier_weighted_coreness",
        "supplier_proj_eigenvector",
        "supplier_proj_degree",
        "supplier_proj_strength",
        "supplier_proj_closeness",
        "supplier_proj_betweenness",
        "supplier_competitive_clustering",
        "buyer_coreness",
        "buyer_weighted_coreness",
        "buyer_proj_eigenvector",
        "buyer_proj_degree",
        "buyer_proj_strength",
        "buyer_proj_closeness",
        "buyer_proj_betweenness",
        "buyer_competitive_clustering",
        "supplier_n_contracts",
        "supplier_avg_cri",
        "supplier_prop_recorded_direct",
        "supplier_prop_post_direct",
        "buyer_n_contracts",
        "buyer_avg_cri",
        "edge_active_weeks",
        "edge_contracts_per_week",
        "edge_spend_per_week",
        "edge_avg_cri",
        "edge_neighborhood_avg_cri",
        "edge_neighborhood_prop_direct",
        "edge_betweenness",
        "cri",
        "benford_mad",
        "rf_single_bidder",
        "rf_buyer_dependence",
    ]
    for name in visible:
        assert fm.columns.count(name) == 1, name


def test_feature_matrix_save_load_round_trip(tmp_path):
    dataset = small_dataset()
    fm = build_features(dataset).matrix
    csv_path = tmp_path / "features.csv"
    man_path = tmp_path / "features.manifest.json"
    save_feature_matrix(fm, csv_path, man_path, {"dataset_hash": "abc"})
    loaded = load_feature_matrix(csv_path, man_path)
    assert loaded.columns == fm.columns
    assert np.array_equal(loaded.values, fm.values)
    assert loaded.contract_ids == fm.contract_ids

    # byte-identical rewrite
    csv2 = tmp_path / "features2.csv"
    man2 = tmp_path / "features2.manifest.json"
    save_feature_matrix(fm, csv2, man2, {"dataset_hash": "abc"})
    assert csv_path.read_bytes() == csv2.read_bytes()
    assert man_path.read_bytes() == man2.read_bytes()


def test_no_nan_after_encoding_and_sentinels_recorded():
    dataset = small_dataset()
    fm = build_features(dataset).matrix
    assert not np.isnan(fm.values).any()
    # competitive clustering is missing for some nodes here, so it must carry a sentinel
    meta = {m.name: m for m in fm.meta}
    assert meta["supplier_competitive_clustering"].sentinel is not None
    sources = {m.source for m in fm.meta}
    assert sources == {"domain", "network", "aggregate"}
