"""Hellinger distance stratified random forest for PU data.

Every bootstrap contains all labeled positives plus a with-replacement draw
of K_U unlabeled rows (stratification), each tree gets its own seed derived
from (master seed, tree index), so results do not depend on worker count.
"""

from __future__ import annotations

import math
import multiprocessing as mp
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .. import modelio
from .hellinger import grow_tree, max_nodes, predict_tree

__all__ = ["HdsrfConfig", "HdsrfModel", "hdsrf_train", "hdsrf_predict"]


@dataclass(frozen=True)
class HdsrfConfig:
    class_prior: float = 0.05
    n_estimators: int = 1000
    max_depth: int = 8
    max_features: int | str = "sqrt"
    min_samples_split: int = 2
    seed: int = 0

    def resolve_max_features(self, n_columns: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.sqrt(n_columns)))
        m = int(self.max_features)
        if not (1 <= m <= n_columns):
            raise ValueError("max_features out of range")
        return m


@dataclass
class HdsrfModel:
    config: HdsrfConfig
    feature_columns: list[str]
    feature_manifest_hash: str
    trees: list[tuple[np.ndarray, ...]]  # (feature, threshold, left, right, value, cover)
    n_pos_in_bag: np.ndarray             # instrumentation: positives per bootstrap
    bags: list[np.ndarray] | None = None # full bootstrap rows when recorded

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def save(self, path):
        header = {
            "kind": "hdsrf",
            "schema_version": 1,
            "config": asdict(self.config),
            "feature_columns": self.feature_columns,
            "feature_manifest_hash": self.feature_manifest_hash,
            "n_trees": self.n_trees,
        }
        arrays = {"n_pos_in_bag": self.n_pos_in_bag}
        for t, tree in enumerate(self.trees):
            names = ("feature", "threshold", "left", "right", "value", "cover")
            for name, arr in zip(names, tree):
                arrays[f"tree{t:05d}_{name}"] = arr
        modelio.save_model(path, header, arrays)

    @classmethod
    def load(cls, path) -> "HdsrfModel":
        header, arrays = modelio.load_model(path)
        if header.get("kind") != "hdsrf":
            raise modelio.ModelFormatError("expected an hdsrf model")
        cfg = header["config"]
        config = HdsrfConfig(
            class_prior=cfg["class_prior"],
            n_estimators=cfg["n_estimators"],
            max_depth=cfg["max_depth"],
            max_features=cfg["max_features"],
            min_samples_split=cfg["min_samples_split"],
            seed=cfg["seed"],
        )
        trees = []
        names = ("feature", "threshold", "left", "right", "value", "cover")
        for t in range(header["n_trees"]):
            trees.append(tuple(arrays[f"tree{t:05d}_{name}"] for name in names))
        return cls(
            config=config,
            feature_columns=header["feature_columns"],
            feature_manifest_hash=header["feature_manifest_hash"],
            trees=trees,
            n_pos_in_bag=arrays["n_pos_in_bag"],
        )


_SHARED: dict = {}


def _build_one(tree_index: int):
    X = _SHARED["X"]
    y = _SHARED["y"]
    pos_idx = _SHARED["pos_idx"]
    unl_idx = _SHARED["unl_idx"]
    config: HdsrfConfig = _SHARED["config"]
    mtry = _SHARED["mtry"]
    rng = np.random.default_rng([config.seed, tree_index])
    boot = unl_idx[rng.integers(0, len(unl_idx), len(unl_idx))]
    sample = np.concatenate([pos_idx, boot])
    feat_rand = rng.random(max_nodes(config.max_depth) * mtry + mtry)
    tree = grow_tree(
        X,
        y,
        sample,
        config.class_prior,
        config.max_depth,
        mtry,
        config.min_samples_split,
        feat_rand,
    )
    return tree_index, tree, int(y[sample].sum()), sample


def hdsrf_train(
    X: np.ndarray,
    labels: np.ndarray,
    config: HdsrfConfig,
    feature_columns: list[str] | None = None,
    feature_manifest_hash: str = "",
    n_workers: int = 1,
    record_bags: bool = False,
) -> HdsrfModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    pos_idx = np.flatnonzero(labels == 1).astype(np.int64)
    unl_idx = np.flatnonzero(labels == 0).astype(np.int64)
    if len(pos_idx) == 0:
        raise ValueError("PU training requires >=1 positive")
    if len(unl_idx) == 0:
        raise ValueError("PU training requires >=1 unlabeled row")
    observed = len(pos_idx) / len(labels)
    if config.class_prior <= observed:
        warnings.warn(
            f"class prior {config.class_prior} is not above the observed positive "
            f"proportion {observed:.4f}",
            stacklevel=2,
        )
    mtry = config.resolve_max_features(X.shape[1])

    _SHARED.update(
        X=X, y=labels.astype(np.int64), pos_idx=pos_idx, unl_idx=unl_idx, config=config, mtry=mtry
    )
    try:
        indices = range(config.n_estimators)
        if n_workers <= 1:
            results = [_build_one(t) for t in indices]
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(n_workers) as pool:
                results = pool.map(_build_one, indices, chunksize=16)
    finally:
        _SHARED.clear()
    results.sort(key=lambda r: r[0])
    trees = [r[1] for r in results]
    n_pos_in_bag = np.array([r[2] for r in results], dtype=np.int64)
    bags = [r[3] for r in results] if record_bags else None
    return HdsrfModel(
        config=config,
        feature_columns=list(feature_columns or []),
        feature_manifest_hash=feature_manifest_hash,
        trees=trees,
        n_pos_in_bag=n_pos_in_bag,
        bags=bags,
    )


def hdsrf_predict(model: HdsrfModel, X: np.ndarray, feature_columns: list[str] | None = None) -> np.ndarray:
    """Mean of per-tree leaf scores, accumulated in tree order."""
    if feature_columns is not None and model.feature_columns:
        if list(feature_columns) != model.feature_columns:
            for got, want in zip(feature_columns, model.feature_columns):
                if got != want:
                    raise ValueError(f"feature schema mismatch: {got!r} != expected {want!r}")
            raise ValueError("feature schema mismatch: column count differs")
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.zeros(X.shape[0])
    for tree in model.trees:
        feature, threshold, left, right, value, _ = tree
        predict_tree(feature, threshold, left, right, value, X, out)
    return out / model.n_trees
