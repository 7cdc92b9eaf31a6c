"""PU bagging: linear hinge-loss classifiers in RFF space over bootstrapped
unlabeled samples, all labeled positives included in every bag.

Each estimator treats its unlabeled bootstrap (size = number of positives)
as provisional negatives. Vote-fraction aggregation deliberately produces at
most n_estimators + 1 distinct scores; the tie-aware metrics downstream are
what make that honest.
"""

from __future__ import annotations

import math
import multiprocessing as mp
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .. import modelio
from .rff import RffMap, Standardizer, fit_rff, fit_standardizer, rff_transform

__all__ = ["PuBaggingConfig", "PuBaggingModel", "pubag_train", "pubag_score", "sgd_hinge"]

AGGREGATIONS = ("vote_fraction", "mean_margin")


@dataclass(frozen=True)
class PuBaggingConfig:
    n_estimators: int = 500
    rff_gamma: float = 0.01
    rff_components: int = 200
    sgd_max_iter: int = 1000
    sgd_lambda: float = 1e-4
    sgd_t0: float = 1.0
    sgd_tol: float = 1e-6
    aggregation: str = "vote_fraction"
    seed: int = 0

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.rff_components < 1 or self.n_estimators < 1:
            raise ValueError("n_estimators and rff_components must be >= 1")


@njit(cache=True)
def _splitmix_next(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def sgd_hinge(Z, y, lam, t0, max_epochs, tol, seed):
    """Per-sample stochastic subgradient descent on the hinge loss with L2
    penalty, step 1/(lam*(t0+t)), reshuffled every epoch; stops early when
    the epoch objective moves less than tol."""
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    order = np.arange(n)
    state = np.uint64(seed)
    t = 0
    prev_loss = np.inf
    epochs_run = 0
    for _epoch in range(max_epochs):
        # Fisher-Yates reshuffle
        for i in range(n - 1, 0, -1):
            state, z = _splitmix_next(state)
            j = int((float(z) / 18446744073709551616.0) * (i + 1))
            if j > i:
                j = i
            tmp = order[i]
            order[i] = order[j]
            order[j] = tmp
        hinge_sum = 0.0
        for k in range(n):
            i = order[k]
            t += 1
            eta = 1.0 / (lam * (t0 + t))
            margin = b
            for c in range(d):
                margin += w[c] * Z[i, c]
            margin *= y[i]
            decay = 1.0 - eta * lam
            if margin < 1.0:
                hinge_sum += 1.0 - margin
                for c in range(d):
                    w[c] = decay * w[c] + eta * y[i] * Z[i, c]
                b += eta * y[i]
            else:
                for c in range(d):
                    w[c] = decay * w[c]
        norm2 = 0.0
        for c in range(d):
            norm2 += w[c] * w[c]
        loss = hinge_sum / n + 0.5 * lam * norm2
        epochs_run += 1
        if abs(prev_loss - loss) < tol:
            break
        prev_loss = loss
    return w, b, epochs_run


@dataclass
class PuBaggingModel:
    config: PuBaggingConfig
    standardizer: Standardizer
    rff: RffMap
    weights: np.ndarray         # (n_estimators, n_components)
    biases: np.ndarray          # (n_estimators,)
    sampled_rows: list[np.ndarray]  # per estimator: global row ids of its unlabeled draw
    feature_columns: list[str]
    feature_manifest_hash: str
    epochs_run: np.ndarray

    @property
    def n_estimators(self) -> int:
        return len(self.biases)

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        z = rff_transform(self.rff, self.standardizer.apply(X))
        return z @ self.weights.T + self.biases

    def save(self, path):
        header = {
            "kind": "pubag",
            "schema_version": 1,
            "config": asdict(self.config),
            "feature_columns": self.feature_columns,
            "feature_manifest_hash": self.feature_manifest_hash,
        }
        indptr = np.cumsum([0] + [len(s) for s in self.sampled_rows]).astype(np.int64)
        flat = (
            np.concatenate(self.sampled_rows)
            if self.sampled_rows
            else np.empty(0, dtype=np.int64)
        )
        arrays = {
            "std_mean": self.standardizer.mean,
            "std_std": self.standardizer.std,
            "rff_weights": self.rff.weights,
            "rff_phases": self.rff.phases,
            "weights": self.weights,
            "biases": self.biases,
            "sampled_indptr": indptr,
            "sampled_flat": flat.astype(np.int64),
            "epochs_run": self.epochs_run,
        }
        modelio.save_model(path, header, arrays)

    @classmethod
    def load(cls, path) -> "PuBaggingModel":
        header, arrays = modelio.load_model(path)
        if header.get("kind") != "pubag":
            raise modelio.ModelFormatError("expected a pubag model")
        config = PuBaggingConfig(**header["config"])
        indptr = arrays["sampled_indptr"]
        flat = arrays["sampled_flat"]
        sampled = [flat[indptr[i] : indptr[i + 1]] for i in range(len(indptr) - 1)]
        return cls(
            config=config,
            standardizer=Standardizer(mean=arrays["std_mean"], std=arrays["std_std"]),
            rff=RffMap(
                weights=arrays["rff_weights"],
                phases=arrays["rff_phases"],
                gamma=config.rff_gamma,
            ),
            weights=arrays["weights"],
            biases=arrays["biases"],
            sampled_rows=sampled,
            feature_columns=header["feature_columns"],
            feature_manifest_hash=header["feature_manifest_hash"],
            epochs_run=arrays["epochs_run"],
        )


_SHARED: dict = {}


def _train_one(index: int):
    Z = _SHARED["Z"]
    pos_idx = _SHARED["pos_idx"]
    unl_idx = _SHARED["unl_idx"]
    config: PuBaggingConfig = _SHARED["config"]
    rng = np.random.default_rng([config.seed, index])
    draw = unl_idx[rng.integers(0, len(unl_idx), len(pos_idx))]
    rows = np.concatenate([pos_idx, draw])
    y = np.concatenate([np.ones(len(pos_idx)), -np.ones(len(draw))])
    sgd_seed = int(rng.integers(0, 2**63 - 1))
    w, b, epochs = sgd_hinge(
        Z[rows],
        y,
        config.sgd_lambda,
        config.sgd_t0,
        config.sgd_max_iter,
        config.sgd_tol,
        sgd_seed,
    )
    return index, w, b, np.sort(np.unique(draw)), epochs


def pubag_train(
    X: np.ndarray,
    labels: np.ndarray,
    config: PuBaggingConfig,
    feature_columns: list[str] | None = None,
    feature_manifest_hash: str = "",
    n_workers: int = 1,
) -> PuBaggingModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int8)
    pos_idx = np.flatnonzero(labels == 1).astype(np.int64)
    unl_idx = np.flatnonzero(labels == 0).astype(np.int64)
    if len(pos_idx) == 0:
        raise ValueError("PU training requires >=1 positive")
    if len(unl_idx) == 0:
        raise ValueError("PU training requires >=1 unlabeled row")

    standardizer = fit_standardizer(X)
    rff = fit_rff(
        X.shape[1], config.rff_gamma, config.rff_components, [config.seed, 987654321]
    )
    Z = rff_transform(rff, standardizer.apply(X))

    _SHARED.update(Z=Z, pos_idx=pos_idx, unl_idx=unl_idx, config=config)
    try:
        indices = range(config.n_estimators)
        if n_workers <= 1:
            results = [_train_one(i) for i in indices]
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(n_workers) as pool:
                results = pool.map(_train_one, indices, chunksize=8)
    finally:
        _SHARED.clear()
    results.sort(key=lambda r: r[0])
    return PuBaggingModel(
        config=config,
        standardizer=standardizer,
        rff=rff,
        weights=np.vstack([r[1] for r in results]),
        biases=np.array([r[2] for r in results]),
        sampled_rows=[r[3] for r in results],
        feature_columns=list(feature_columns or []),
        feature_manifest_hash=feature_manifest_hash,
        epochs_run=np.array([r[4] for r in results], dtype=np.int64),
    )


def pubag_score(
    model: PuBaggingModel,
    X: np.ndarray,
    mode: str = "test",
    row_ids: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Aggregate estimator outputs into scores.

    test mode uses every estimator. transductive mode expects ``row_ids``
    (global training-row ids aligned to X's rows) and aggregates, for each
    row, only over estimators that did not sample it; rows sampled by every
    estimator fall back to the full ensemble and are counted in diagnostics.
    """
    if mode not in ("test", "transductive"):
        raise ValueError("mode must be 'test' or 'transductive'")
    margins = model.decision_values(np.ascontiguousarray(X, dtype=np.float64))
    votes = (margins > 0).astype(float)
    diagnostics: dict = {"mode": mode}
    if mode == "test":
        if model.config.aggregation == "vote_fraction":
            return votes.mean(axis=1), diagnostics
        return margins.mean(axis=1), diagnostics

    if row_ids is None:
        raise ValueError("transductive scoring needs the training row ids")
    row_ids = np.asarray(row_ids)
    in_bag = np.zeros((len(row_ids), model.n_estimators), dtype=bool)
    position = {int(r): i for i, r in enumerate(row_ids)}
    for e, sampled in enumerate(model.sampled_rows):
        for r in sampled:
            i = position.get(int(r))
            if i is not None:
                in_bag[i, e] = True
    oob = ~in_bag
    oob_counts = oob.sum(axis=1)
    fully_sampled = oob_counts == 0
    diagnostics["rows_sampled_by_all"] = int(fully_sampled.sum())
    oob[fully_sampled] = True
    oob_counts = oob.sum(axis=1)
    if model.config.aggregation == "vote_fraction":
        scores = (votes * oob).sum(axis=1) / oob_counts
    else:
        scores = (margins * oob).sum(axis=1) / oob_counts
    return scores, diagnostics
