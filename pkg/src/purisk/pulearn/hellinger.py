"""Hellinger split criterion with class-prior correction, and tree growth.

The unlabeled mass at a node is split into latent positive and negative
shares through alpha = clip((prior * n - n_P) / n_U, 0, 1), recomputed per
node so the branch mass estimates stay consistent down the tree. A split is
accepted only with a strictly positive Hellinger value; ties break toward
the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["hellinger_split_score", "node_alpha", "grow_tree", "predict_tree", "max_nodes"]


def node_alpha(n: int, n_pos: int, n_unl: int, class_prior: float) -> float:
    if n_unl == 0:
        return 0.0
    return min(1.0, max(0.0, (class_prior * n - n_pos) / n_unl))


def hellinger_split_score(labels, values, threshold: float, class_prior: float) -> float:
    """Score one candidate split of a node; 0 forces a leaf.

    ``labels`` holds 1 for labeled positives and 0 for unlabeled rows.
    """
    labels = np.asarray(labels)
    values = np.asarray(values, dtype=float)
    n = len(labels)
    n_pos = int(labels.sum())
    n_unl = n - n_pos
    alpha = node_alpha(n, n_pos, n_unl, class_prior)
    left = values <= threshold
    lp = int(labels[left].sum())
    lu = int(left.sum()) - lp
    return _branch_score(lp, lu, n_pos - lp, n_unl - lu, alpha)


def _branch_score(lp: int, lu: int, rp: int, ru: int, alpha: float) -> float:
    pos_l = lp + alpha * lu
    neg_l = (1.0 - alpha) * lu
    pos_r = rp + alpha * ru
    neg_r = (1.0 - alpha) * ru
    pos_t = pos_l + pos_r
    neg_t = neg_l + neg_r
    if pos_t == 0.0 or neg_t == 0.0:
        return 0.0
    p_l = pos_l / pos_t
    q_l = neg_l / neg_t
    p_r = pos_r / pos_t
    q_r = neg_r / neg_t
    return math.sqrt(
        (math.sqrt(p_l) - math.sqrt(q_l)) ** 2 + (math.sqrt(p_r) - math.sqrt(q_r)) ** 2
    )


def max_nodes(max_depth: int) -> int:
    return 2 ** (max_depth + 1) - 1


@njit(cache=True)
def grow_tree(
    X,
    y,
    sample_rows,
    class_prior,
    max_depth,
    max_features,
    min_samples_split,
    feat_rand,
):
    """Grow one tree on the bagged rows; returns packed node arrays.

    Node arrays are sized for a complete tree; ``n_nodes`` gives the used
    prefix. Leaves carry feature = -1. ``cover`` counts bagged rows per node.
    """
    n_total = len(sample_rows)
    d = X.shape[1]
    cap = 2 ** (max_depth + 2) - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    cover = np.zeros(cap, dtype=np.int64)
    n_nodes = 1

    work = sample_rows.copy()
    # stack frames: node id, start, end, depth
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_total
    stack[0, 3] = 0
    top = 1

    pool = np.empty(d, dtype=np.int64)
    cursor = 0

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        n = end - start
        n_pos = 0
        for i in range(start, end):
            n_pos += y[work[i]]
        n_unl = n - n_pos
        if n_unl == 0:
            alpha = 0.0
        else:
            alpha = (class_prior * n - n_pos) / n_unl
            if alpha < 0.0:
                alpha = 0.0
            elif alpha > 1.0:
                alpha = 1.0
        cover[node] = n
        value[node] = (n_pos + alpha * n_unl) / n

        if depth >= max_depth or n < min_samples_split:
            continue

        # draw max_features distinct feature indices (partial Fisher-Yates)
        for j in range(d):
            pool[j] = j
        mtry = max_features if max_features < d else d
        for j in range(mtry):
            r = j + int(feat_rand[cursor] * (d - j))
            cursor += 1
            if r >= d:
                r = d - 1
            tmp = pool[j]
            pool[j] = pool[r]
            pool[r] = tmp
        chosen = np.sort(pool[:mtry])

        best_score = 0.0
        best_feat = -1
        best_thr = 0.0
        vals = np.empty(n)
        for ci in range(mtry):
            f = chosen[ci]
            for i in range(n):
                vals[i] = X[work[start + i], f]
            order = np.argsort(vals)
            cp = 0
            cu = 0
            for i in range(n - 1):
                r_i = work[start + order[i]]
                if y[r_i] == 1:
                    cp += 1
                else:
                    cu += 1
                v_here = vals[order[i]]
                v_next = vals[order[i + 1]]
                if v_here < v_next:
                    thr = (v_here + v_next) / 2.0
                    pos_l = cp + alpha * cu
                    neg_l = (1.0 - alpha) * cu
                    pos_r = (n_pos - cp) + alpha * (n_unl - cu)
                    neg_r = (1.0 - alpha) * (n_unl - cu)
                    pos_t = pos_l + pos_r
                    neg_t = neg_l + neg_r
                    if pos_t == 0.0 or neg_t == 0.0:
                        score = 0.0
                    else:
                        p_l = pos_l / pos_t
                        q_l = neg_l / neg_t
                        p_r = pos_r / pos_t
                        q_r = neg_r / neg_t
                        score = math.sqrt(
                            (math.sqrt(p_l) - math.sqrt(q_l)) ** 2
                            + (math.sqrt(p_r) - math.sqrt(q_r)) ** 2
                        )
                    if score > best_score:
                        best_score = score
                        best_feat = f
                        best_thr = thr

        if best_feat < 0 or best_score <= 0.0:
            continue

        # partition work[start:end] in place by the chosen split
        lo = start
        hi = end - 1
        while lo <= hi:
            if X[work[lo], best_feat] <= best_thr:
                lo += 1
            else:
                tmp = work[lo]
                work[lo] = work[hi]
                work[hi] = tmp
                hi -= 1
        mid = lo
        if mid == start or mid == end:
            continue  # degenerate split cannot happen with distinct boundary, kept as guard

        feature[node] = best_feat
        threshold[node] = best_thr
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id
        stack[top, 0] = right_id
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        value[:n_nodes],
        cover[:n_nodes],
    )


@njit(cache=True)
def predict_tree(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]
