"""Isotonic (pool-adjacent-violators) probability calibration.

The fitted mapping is a non-decreasing step function of the raw score, so
calibration can never reorder a ranking; equal raw scores stay equal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CalibratedScorer", "calibrate"]


@dataclass(frozen=True)
class CalibratedScorer:
    block_starts: np.ndarray  # ascending raw-score block boundaries
    values: np.ndarray        # non-decreasing calibrated values in [0, 1]
    identity: bool = False
    warning: str | None = None

    def apply(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if self.identity:
            return raw.copy()
        idx = np.searchsorted(self.block_starts, raw, side="right") - 1
        return self.values[np.clip(idx, 0, len(self.values) - 1)]


def calibrate(raw_scores, labels) -> CalibratedScorer:
    """Fit positive frequency as a monotone function of the raw score.

    With zero positives in the calibration data the mapping degenerates, so
    the identity is returned with a warning instead.
    """
    raw_scores = np.asarray(raw_scores, dtype=float)
    labels = np.asarray(labels)
    if len(raw_scores) == 0:
        raise ValueError("empty calibration set")
    if labels.sum() == 0:
        return CalibratedScorer(
            block_starts=np.empty(0),
            values=np.empty(0),
            identity=True,
            warning="no positives in the calibration set: identity mapping",
        )

    order = np.argsort(raw_scores, kind="stable")
    s = raw_scores[order]
    y = labels[order].astype(float)
    # pre-pool equal raw scores so ties share one block
    uniq, start = np.unique(s, return_index=True)
    sums = np.add.reduceat(y, start)
    counts = np.diff(np.append(start, len(y))).astype(float)

    # pool adjacent violators
    block_start: list[float] = []
    block_sum: list[float] = []
    block_cnt: list[float] = []
    for i in range(len(uniq)):
        block_start.append(float(uniq[i]))
        block_sum.append(float(sums[i]))
        block_cnt.append(counts[i])
        while (
            len(block_sum) > 1
            and block_sum[-2] * block_cnt[-1] >= block_sum[-1] * block_cnt[-2]
        ):
            # previous mean >= current mean: merge
            block_sum[-2] += block_sum[-1]
            block_cnt[-2] += block_cnt[-1]
            block_sum.pop()
            block_cnt.pop()
            block_start.pop()
    values = np.array(block_sum) / np.array(block_cnt)
    return CalibratedScorer(
        block_starts=np.array(block_start), values=np.clip(values, 0.0, 1.0)
    )
