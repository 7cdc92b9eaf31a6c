"""Tie-aware ranking metrics: robust cumulative sum, gain, lift, permutation test.

Scores produced by ensemble voters frequently collapse into large blocks of
identical values. Credit for the positives inside such a block is granted only
once the whole block has been consumed, so a classifier that assigns one
probability to half the test set cannot look good by accident.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RankedPredictions",
    "RankingEvaluation",
    "rank_predictions",
    "tie_groups",
    "robust_cumsum",
    "gain_and_lift",
    "evaluate_ranking",
    "permutation_test",
    "PermutationResult",
]


@dataclass(frozen=True)
class RankedPredictions:
    """Labels and scores sorted by score descending (stable)."""

    labels: np.ndarray  # int 0/1, sorted alongside scores
    scores: np.ndarray  # float, non-increasing
    order: np.ndarray   # positions into the original arrays

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def prevalence(self) -> float:
        return self.n_positive / self.n


@dataclass(frozen=True)
class RankingEvaluation:
    """Step curves and their averages for one ranked prediction set."""

    robust_cumsum: np.ndarray   # C_R(k), k = 1..n
    null_cumsum: np.ndarray     # pi * k
    gain: np.ndarray            # (C_R(k) - pi k) / P
    lift: np.ndarray            # C_R(k) / (pi k)
    avg_gain: float
    avg_lift: float
    n: int
    n_positive: int
    group_bounds: np.ndarray    # 1-based inclusive end rank of each tie group

    def curve_points(self, n_uniform: int = 1000) -> np.ndarray:
        """Ranks to sample when exporting curves: every block end plus a
        uniform grid, deduplicated and sorted (1-based)."""
        grid = np.unique(
            np.concatenate(
                [
                    self.group_bounds,
                    np.linspace(1, self.n, min(n_uniform, self.n)).round().astype(np.int64),
                ]
            )
        )
        return grid


def rank_predictions(labels, scores) -> RankedPredictions:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError("labels and scores must be 1-d arrays of equal length")
    if len(labels) == 0:
        raise ValueError("cannot rank an empty prediction set")
    order = np.argsort(-scores, kind="stable")
    return RankedPredictions(
        labels=labels[order].astype(np.int64), scores=scores[order], order=order
    )


def tie_groups(ranked: RankedPredictions) -> list[tuple[int, int]]:
    """Maximal runs of equal score, as 1-based inclusive (start, end) ranks."""
    s = ranked.scores
    boundaries = np.flatnonzero(s[:-1] != s[1:])  # last index of each group but the final
    ends = np.concatenate([boundaries + 1, [len(s)]])
    starts = np.concatenate([[1], boundaries + 2])
    return list(zip(starts.tolist(), ends.tolist()))


def robust_cumsum(ranked: RankedPredictions, groups: list[tuple[int, int]] | None = None) -> np.ndarray:
    """Tie-aware cumulative positives C_R(k), k = 1..n.

    Inside a tie block [a, b] the curve holds at C(a - 1) for k < b and jumps
    to C(b) at k = b, so block credit arrives only when the block is complete.
    """
    if ranked.n_positive == 0:
        raise ValueError("no known positives: tie-aware metrics are undefined")
    if groups is None:
        groups = tie_groups(ranked)
    plain = np.cumsum(ranked.labels)
    out = np.empty(ranked.n, dtype=np.int64)
    for a, b in groups:
        out[a - 1 : b - 1] = plain[a - 2] if a >= 2 else 0
        out[b - 1] = plain[b - 1]
    return out


def gain_and_lift(ranked: RankedPredictions, groups: list[tuple[int, int]] | None = None) -> RankingEvaluation:
    """Gain/lift step curves against the random-guessing baseline pi*k."""
    if groups is None:
        groups = tie_groups(ranked)
    cr = robust_cumsum(ranked, groups)
    n, p = ranked.n, ranked.n_positive
    pi = p / n
    k = np.arange(1, n + 1, dtype=float)
    null = pi * k
    gain = (cr - null) / p
    lift = cr / null
    return RankingEvaluation(
        robust_cumsum=cr,
        null_cumsum=null,
        gain=gain,
        lift=lift,
        avg_gain=float(gain.mean()),
        avg_lift=float(lift.mean()),
        n=n,
        n_positive=p,
        group_bounds=np.array([b for _, b in groups], dtype=np.int64),
    )


def evaluate_ranking(labels, scores) -> RankingEvaluation:
    """Rank by score and compute all tie-aware metrics in one call.

    This is the single code path shared by model scores and the plain
    CRI-ranking baseline.
    """
    ranked = rank_predictions(labels, scores)
    return gain_and_lift(ranked)


@dataclass
class PermutationResult:
    observed_avg_gain: float
    observed_avg_lift: float
    permuted_avg_gain: np.ndarray
    permuted_avg_lift: np.ndarray
    p_value_gain: float
    p_value_lift: float
    n_permutations: int
    seed: int
    warnings: list[str] = field(default_factory=list)


def permutation_test(
    train_predict,
    suppliers: np.ndarray,
    positive_suppliers: set[str],
    eval_mask: np.ndarray,
    n_permutations: int,
    seed: int,
) -> PermutationResult:
    """Supplier-level label permutation test for avg gain and avg lift.

    ``train_predict(labels)`` takes a per-row 0/1 label array for the whole
    dataset, trains from scratch, and returns scores for the rows selected by
    ``eval_mask``. Each permutation reassigns positive status to a uniformly
    random supplier subset of the same supplier count, so labels move at the
    company level, matching the label generation process.

    p = (1 + #{permuted metric >= observed}) / (B + 1).
    """
    if n_permutations < 19:
        raise ValueError("need at least 19 permutations for a meaningful p-value")
    suppliers = np.asarray(suppliers)
    unique_suppliers = np.unique(suppliers)
    n_pos_sup = len(positive_suppliers & set(unique_suppliers.tolist()))
    if n_pos_sup == 0:
        raise ValueError("no positive suppliers present in the data")

    warnings: list[str] = []
    base_labels = np.isin(suppliers, sorted(positive_suppliers)).astype(np.int64)
    observed_scores = train_predict(base_labels)
    obs = evaluate_ranking(base_labels[eval_mask], observed_scores)

    rng = np.random.default_rng(seed)
    perm_gain = np.empty(n_permutations)
    perm_lift = np.empty(n_permutations)
    for b in range(n_permutations):
        chosen = rng.choice(unique_suppliers, size=n_pos_sup, replace=False)
        labels_b = np.isin(suppliers, chosen).astype(np.int64)
        if labels_b[eval_mask].sum() == 0:
            # no positives landed in the evaluation slice; metric undefined,
            # count as a non-exceedance with the worst permuted value
            warnings.append(f"permutation {b}: no positives in evaluation slice")
            perm_gain[b] = -np.inf
            perm_lift[b] = -np.inf
            continue
        try:
            scores_b = train_predict(labels_b)
        except ValueError as exc:
            # e.g. every chosen supplier fell outside the training rows
            warnings.append(f"permutation {b}: untrainable ({exc})")
            perm_gain[b] = -np.inf
            perm_lift[b] = -np.inf
            continue
        ev = evaluate_ranking(labels_b[eval_mask], scores_b)
        perm_gain[b] = ev.avg_gain
        perm_lift[b] = ev.avg_lift

    p_gain = (1 + int((perm_gain >= obs.avg_gain).sum())) / (n_permutations + 1)
    p_lift = (1 + int((perm_lift >= obs.avg_lift).sum())) / (n_permutations + 1)
    return PermutationResult(
        observed_avg_gain=obs.avg_gain,
        observed_avg_lift=obs.avg_lift,
        permuted_avg_gain=perm_gain,
        permuted_avg_lift=perm_lift,
        p_value_gain=p_gain,
        p_value_lift=p_lift,
        n_permutations=n_permutations,
        seed=seed,
        warnings=warnings,
    )
