import numpy as np
import pytest
from scipy.stats import chi2_contingency

from purisk.domain import apply_labels, parse_contracts, parse_sanctions
from purisk.synth import SynthConfig, concentration_report, generate, gini


def small_config(**kw):
    base = dict(
        n_buyers=30,
        n_suppliers=120,
        years=(2018, 2019),
        contracts_per_year=1200,
        n_core_buyers=5,
        top_rank_fraud_exempt=3,
        seed=7,
    )
    base.update(kw)
    return SynthConfig(**base)


def test_zero_fraud_rejected_by_validation():
    with pytest.raises(ValueError):
        SynthConfig(fraud_fraction=0.0).validate()


def test_sanction_rate_one_reveals_all_fraud():
    out = generate(small_config(sanction_rate=1.0))
    assert sorted(out.sanctioned_suppliers) == sorted(out.fraud_suppliers)


def test_outputs_parse_cleanly_and_deterministically():
    cfg = small_config()
    out1 = generate(cfg)
    out2 = generate(cfg)
    assert out1.contracts_csv == out2.contracts_csv
    assert out1.sanctions_csv == out2.sanctions_csv
    assert out1.ground_truth_csv == out2.ground_truth_csv

    dataset, report = parse_contracts(out1.contracts_csv)
    assert report.n_rejected == 0
    assert len(dataset) == 2400
    sanctions, srep = parse_sanctions(out1.sanctions_csv)
    assert srep.n_rejected == 0
    labeled = apply_labels(dataset, sanctions)
    assert labeled.labels.sum() > 0


def test_different_seed_changes_output():
    assert generate(small_config(seed=1)).contracts_csv != generate(small_config(seed=2)).contracts_csv


def test_infeasible_configs_error():
    with pytest.raises(ValueError, match="one contract per supplier"):
        generate(small_config(contracts_per_year=10))
    with pytest.raises(ValueError, match="saturat"):
        generate(small_config(fraud_direct_rate=0.95))


def test_gini_extremes():
    assert gini([5, 5, 5, 5]) == pytest.approx(0.0)
    n = 50
    one_holds_all = [0] * (n - 1) + [1000]
    assert gini(one_holds_all) == pytest.approx(1 - 1 / n)


def test_default_config_concentration_targets():
    out = generate(SynthConfig())
    dataset, _ = parse_contracts(out.contracts_csv)
    report = concentration_report(dataset.supplier_ids)
    assert abs(report["gini"] - 0.77) <= 0.05
    assert abs(report["top5_share"] - 0.64) <= 0.05


def test_default_config_prevalence_in_band():
    out = generate(SynthConfig())
    dataset, _ = parse_contracts(out.contracts_csv)
    sanctions, _ = parse_sanctions(out.sanctions_csv)
    labeled = apply_labels(dataset, sanctions)
    prevalence = labeled.labels.mean()
    assert 0.022 <= prevalence <= 0.05


def test_scar_sanctions_independent_of_behavior_given_fraud():
    # among fraud suppliers, sanctioned vs unsanctioned should not differ in
    # direct-award share (chi-squared on binned shares)
    out = generate(small_config(n_suppliers=400, contracts_per_year=4000, seed=3))
    dataset, _ = parse_contracts(out.contracts_csv)
    shares = {}
    for c in dataset.contracts:
        n, d = shares.get(c.supplier_id, (0, 0))
        shares[c.supplier_id] = (n + 1, d + (1 if c.is_recorded_direct else 0))
    sanctioned = set(out.sanctioned_suppliers)
    rows = []
    for s in out.fraud_suppliers:
        if s not in shares:
            continue
        n, d = shares[s]
        rows.append((s in sanctioned, d / n > 0.7))
    rows = np.array(rows)
    table = np.array(
        [
            [np.sum(rows[:, 0] & rows[:, 1]), np.sum(rows[:, 0] & ~rows[:, 1])],
            [np.sum(~rows[:, 0] & rows[:, 1]), np.sum(~rows[:, 0] & ~rows[:, 1])],
        ]
    )
    _, p, _, _ = chi2_contingency(table)
    assert p > 0.01


def test_planted_structure_is_visible():
    out = generate(small_config(seed=11))
    dataset, _ = parse_contracts(out.contracts_csv)
    fraud = set(out.fraud_suppliers)
    by_supplier: dict[str, list] = {}
    for c in dataset.contracts:
        by_supplier.setdefault(c.supplier_id, []).append(c)
    fraud_direct, clean_direct = [], []
    fraud_core, clean_core = [], []
    for s, contracts in by_supplier.items():
        share = np.mean([c.is_recorded_direct for c in contracts])
        core_share = np.mean([int(c.buyer_id[1:]) < 5 for c in contracts])
        if s in fraud:
            fraud_direct.append(share)
            fraud_core.append(core_share)
        else:
            clean_direct.append(share)
            clean_core.append(core_share)
    assert np.mean(fraud_direct) > np.mean(clean_direct) + 0.1
    assert np.mean(fraud_core) > np.mean(clean_core) + 0.2
    # fraud suppliers stay clear of direct-award saturation on average
    assert np.mean(fraud_direct) < 0.9
