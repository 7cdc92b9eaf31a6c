import numpy as np
import pytest

from purisk.pulearn import HdsrfConfig, hdsrf_predict, hdsrf_train
from purisk.pulearn.forest import HdsrfModel


def planted_pu_data(n=500, d=6, prior=0.2, label_rate=0.5, seed=0):
    """Separable fraud signal on feature 0; SCAR labels at label_rate."""
    rng = np.random.default_rng(seed)
    truth = rng.random(n) < prior
    X = rng.normal(size=(n, d))
    X[truth, 0] += 2.5
    labels = (truth & (rng.random(n) < label_rate)).astype(np.int8)
    return X, labels, truth


def test_training_requires_positives_and_unlabeled():
    X = np.zeros((4, 2))
    with pytest.raises(ValueError, match="positive"):
        hdsrf_train(X, np.zeros(4, dtype=int), HdsrfConfig(n_estimators=2))
    with pytest.raises(ValueError, match="unlabeled"):
        hdsrf_train(X, np.ones(4, dtype=int), HdsrfConfig(n_estimators=2))


def test_prior_below_observed_rate_warns():
    X = np.random.default_rng(0).normal(size=(40, 3))
    labels = np.zeros(40, dtype=np.int8)
    labels[:20] = 1
    with pytest.warns(UserWarning, match="class prior"):
        hdsrf_train(X, labels, HdsrfConfig(class_prior=0.05, n_estimators=2, max_depth=2))


def test_every_bag_contains_all_positives():
    X, labels, _ = planted_pu_data(n=300, seed=1)
    config = HdsrfConfig(class_prior=0.12, n_estimators=25, max_depth=3, seed=5)
    model = hdsrf_train(X, labels, config, record_bags=True)
    n_pos = int(labels.sum())
    assert np.all(model.n_pos_in_bag == n_pos)
    pos_rows = set(np.flatnonzero(labels == 1).tolist())
    for bag in model.bags:
        assert pos_rows <= set(bag.tolist())
        # bootstrap part has size K_U
        assert len(bag) == n_pos + int((labels == 0).sum())


def test_planted_signal_separates_scores():
    X, labels, truth = planted_pu_data(n=600, seed=2)
    config = HdsrfConfig(class_prior=0.2, n_estimators=60, max_depth=4, seed=9)
    model = hdsrf_train(X, labels, config)
    scores = hdsrf_predict(model, X)
    assert scores[labels == 1].mean() > np.median(scores[labels == 0])
    # held-out truth should score above clean rows too
    assert scores[truth].mean() > scores[~truth].mean()


def test_single_tree_prediction_is_leaf_score():
    X, labels, _ = planted_pu_data(n=120, seed=3)
    config = HdsrfConfig(class_prior=0.2, n_estimators=1, max_depth=2, seed=1)
    model = hdsrf_train(X, labels, config)
    scores = hdsrf_predict(model, X)
    feature, threshold, left, right, value, cover = model.trees[0]

    def leaf_score(row):
        node = 0
        while feature[node] >= 0:
            node = left[node] if X[row, feature[node]] <= threshold[node] else right[node]
        return value[node]

    for i in range(0, 120, 7):
        assert scores[i] == leaf_score(i)


def test_duplicate_rows_identical_scores_and_range():
    X, labels, _ = planted_pu_data(n=200, seed=4)
    model = hdsrf_train(X, labels, HdsrfConfig(class_prior=0.2, n_estimators=10, max_depth=3))
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(500, X.shape[1]))
    rows[250:] = rows[:250]
    scores = hdsrf_predict(model, rows)
    assert np.array_equal(scores[:250], scores[250:])
    assert np.all((scores >= 0) & (scores <= 1))


def test_worker_count_does_not_change_model():
    X, labels, _ = planted_pu_data(n=250, seed=5)
    config = HdsrfConfig(class_prior=0.2, n_estimators=8, max_depth=3, seed=11)
    m1 = hdsrf_train(X, labels, config, n_workers=1)
    m2 = hdsrf_train(X, labels, config, n_workers=2)
    for t1, t2 in zip(m1.trees, m2.trees):
        for a1, a2 in zip(t1, t2):
            assert np.array_equal(a1, a2)
    probe = np.random.default_rng(1).normal(size=(50, X.shape[1]))
    assert np.array_equal(hdsrf_predict(m1, probe), hdsrf_predict(m2, probe))


def test_model_persistence_round_trip(tmp_path):
    X, labels, _ = planted_pu_data(n=150, seed=6)
    config = HdsrfConfig(class_prior=0.2, n_estimators=5, max_depth=3, seed=2)
    model = hdsrf_train(X, labels, config, feature_columns=[f"f{i}" for i in range(X.shape[1])],
                        feature_manifest_hash="deadbeef")
    path = tmp_path / "model.bin"
    model.save(path)
    loaded = HdsrfModel.load(path)
    assert loaded.config == config
    assert loaded.feature_manifest_hash == "deadbeef"
    probe = np.random.default_rng(2).normal(size=(40, X.shape[1]))
    assert np.array_equal(hdsrf_predict(model, probe), hdsrf_predict(loaded, probe))
    # deterministic bytes on re-save
    path2 = tmp_path / "model2.bin"
    loaded.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_schema_mismatch_names_first_bad_column():
    X, labels, _ = planted_pu_data(n=100, seed=7)
    cols = [f"f{i}" for i in range(X.shape[1])]
    model = hdsrf_train(
        X, labels, HdsrfConfig(class_prior=0.2, n_estimators=2, max_depth=2), feature_columns=cols
    )
    bad = list(cols)
    bad[2] = "intruder"
    with pytest.raises(ValueError, match="intruder"):
        hdsrf_predict(model, X, feature_columns=bad)


def test_stump_config_reproduces_exhaustive_best_split():
    # n_estimators=1, max_depth=1, all features considered: the stump must
    # equal the exhaustive best split on its own bootstrap sample
    from test_hellinger import oracle_best_split

    X, labels, _ = planted_pu_data(n=80, d=4, seed=8)
    config = HdsrfConfig(
        class_prior=0.2, n_estimators=1, max_depth=1, max_features=4, seed=21
    )
    model = hdsrf_train(X, labels, config, record_bags=True)
    bag = model.bags[0]
    score, f_star, thr_star = oracle_best_split(X[bag], labels[bag].astype(np.int64), 0.2)
    feature, threshold, *_ = model.trees[0]
    if score <= 0:
        assert feature[0] == -1
    else:
        assert feature[0] == f_star
        assert threshold[0] == thr_star
