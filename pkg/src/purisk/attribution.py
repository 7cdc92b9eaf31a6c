"""Exact path-dependent TreeSHAP for the Hellinger forest, plus global
importance aggregation and dependence-plot exports.

Per tree, the polynomial-time path algorithm weights branches by background
cover counts; forest attributions are the per-tree attributions averaged in
tree order, matching how the forest averages leaf scores. Local accuracy
(base + sum(phi) = forest score) holds to float precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .features import FeatureMatrix
from .pulearn.forest import HdsrfModel

__all__ = [
    "ShapMatrix",
    "ImportanceReport",
    "treeshap",
    "tree_covers_from_background",
    "global_importance",
    "dependence_export",
]


@dataclass
class ShapMatrix:
    values: np.ndarray  # (n_rows, n_features)
    base_value: float
    feature_columns: list[str]

    def local_accuracy_residual(self, scores: np.ndarray) -> np.ndarray:
        return np.abs(self.base_value + self.values.sum(axis=1) - scores)


@dataclass
class ImportanceReport:
    feature_columns: list[str]
    mean_abs_shap: np.ndarray
    group_sums: dict[str, float]   # by column source
    ranking: list[tuple[str, float, str]]  # (column, importance, group) best first

    def top(self, k: int = 30) -> list[tuple[str, float, str]]:
        return self.ranking[:k]


@njit(cache=True)
def _extend(fidx, zero, one, pw, m, pz, po, pf):
    fidx[m] = pf
    zero[m] = pz
    one[m] = po
    pw[m] = 1.0 if m == 0 else 0.0
    for i in range(m - 1, -1, -1):
        pw[i + 1] += po * pw[i] * (i + 1.0) / (m + 1.0)
        pw[i] = pz * pw[i] * (m - i) / (m + 1.0)


@njit(cache=True)
def _unwind(fidx, zero, one, pw, last, k):
    of = one[k]
    zf = zero[k]
    nxt = pw[last]
    for i in range(last - 1, -1, -1):
        if of != 0.0:
            tmp = pw[i]
            pw[i] = nxt * (last + 1.0) / ((i + 1.0) * of)
            nxt = tmp - pw[i] * zf * (last - i) / (last + 1.0)
        else:
            pw[i] = pw[i] * (last + 1.0) / (zf * (last - i))
    for i in range(k, last):
        fidx[i] = fidx[i + 1]
        zero[i] = zero[i + 1]
        one[i] = one[i + 1]


@njit(cache=True)
def _unwound_sum(zero, one, pw, last, k):
    of = one[k]
    zf = zero[k]
    nxt = pw[last]
    total = 0.0
    for i in range(last - 1, -1, -1):
        if of != 0.0:
            tmp = nxt * (last + 1.0) / ((i + 1.0) * of)
            total += tmp
            nxt = pw[i] - tmp * zf * (last - i) / (last + 1.0)
        else:
            total += pw[i] / zf * (last + 1.0) / (last - i)
    return total


@njit(cache=True)
def _tree_shap_row(feature, threshold, left, right, leaf_value, cover, x, phi, bufs):
    """Iterative form of the recursive path algorithm; bufs holds per-level
    path arrays (feature index, zero fraction, one fraction, weight)."""
    fidx_all, zero_all, one_all, pw_all = bufs
    max_frames = len(feature) + 2
    stack_node = np.empty(max_frames, dtype=np.int64)
    stack_level = np.empty(max_frames, dtype=np.int64)
    stack_m = np.empty(max_frames, dtype=np.int64)
    stack_pz = np.empty(max_frames)
    stack_po = np.empty(max_frames)
    stack_pf = np.empty(max_frames, dtype=np.int64)

    top = 0
    stack_node[top] = 0
    stack_level[top] = 0
    stack_m[top] = 0
    stack_pz[top] = 1.0
    stack_po[top] = 1.0
    stack_pf[top] = -1
    top += 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        level = stack_level[top]
        m = stack_m[top]
        pz = stack_pz[top]
        po = stack_po[top]
        pf = stack_pf[top]

        fidx = fidx_all[level]
        zero = zero_all[level]
        one = one_all[level]
        pw = pw_all[level]
        if level > 0:
            parent = level - 1
            for i in range(m):
                fidx[i] = fidx_all[parent][i]
                zero[i] = zero_all[parent][i]
                one[i] = one_all[parent][i]
                pw[i] = pw_all[parent][i]
        _extend(fidx, zero, one, pw, m, pz, po, pf)
        length = m + 1
        last = length - 1

        if feature[node] < 0:
            for i in range(1, length):
                w = _unwound_sum(zero, one, pw, last, i)
                phi[fidx[i]] += w * (one[i] - zero[i]) * leaf_value[node]
            continue

        f = feature[node]
        if x[f] <= threshold[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        w_node = cover[node]
        hz = cover[hot] / w_node if w_node > 0 else 0.0
        cz = cover[cold] / w_node if w_node > 0 else 0.0
        iz = 1.0
        io = 1.0
        k = -1
        for i in range(length):
            if fidx[i] == f:
                k = i
                break
        m_child = length
        if k >= 0:
            iz = zero[k]
            io = one[k]
            _unwind(fidx, zero, one, pw, last, k)
            m_child -= 1

        # a child whose edge carries zero weight both ways contributes nothing
        # and would poison the path algebra with 0/0; skip it entirely
        # (cold child pushed first so the hot child pops first)
        if iz * cz != 0.0:
            stack_node[top] = cold
            stack_level[top] = level + 1
            stack_m[top] = m_child
            stack_pz[top] = iz * cz
            stack_po[top] = 0.0
            stack_pf[top] = f
            top += 1
        if iz * hz != 0.0 or io != 0.0:
            stack_node[top] = hot
            stack_level[top] = level + 1
            stack_m[top] = m_child
            stack_pz[top] = iz * hz
            stack_po[top] = io
            stack_pf[top] = f
            top += 1


@njit(cache=True)
def _count_covers(feature, threshold, left, right, X):
    counts = np.zeros(len(feature), dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        counts[node] += 1
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
            counts[node] += 1
    return counts


def _expected_values(feature, left, right, value, cover) -> np.ndarray:
    """Cover-weighted expectations at every node, leaves keep their score.
    Children always carry larger ids than their parent, so one reverse pass
    suffices."""
    expected = value.astype(float).copy()
    for node in range(len(feature) - 1, -1, -1):
        if feature[node] >= 0:
            lw = cover[left[node]]
            rw = cover[right[node]]
            total = lw + rw
            if total > 0:
                expected[node] = (
                    lw * expected[left[node]] + rw * expected[right[node]]
                ) / total
            else:
                expected[node] = 0.0
    return expected


def tree_covers_from_background(tree, background: np.ndarray) -> np.ndarray:
    feature, threshold, left, right, value, _ = tree
    return _count_covers(feature, threshold, left, right, background)


def treeshap(
    model: HdsrfModel, rows: np.ndarray, background: np.ndarray | None = None
) -> ShapMatrix:
    """Per-row, per-feature attributions for the forest score.

    With no explicit background each tree is weighted by its own bootstrap
    cover counts recorded at fit time; an explicit background re-derives the
    covers by routing its rows through every tree.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if model.feature_columns and rows.shape[1] != len(model.feature_columns):
        raise ValueError(
            f"schema mismatch: {rows.shape[1]} columns, model expects "
            f"{len(model.feature_columns)}"
        )
    if background is not None:
        background = np.ascontiguousarray(background, dtype=np.float64)
        if background.shape[0] == 0:
            raise ValueError("background must contain at least one row")
        if background.shape[1] != rows.shape[1]:
            raise ValueError("schema mismatch: background column count differs")

    n, d = rows.shape
    phi = np.zeros((n, d))
    base = 0.0
    depth_cap = model.config.max_depth + 3
    bufs = (
        np.empty((depth_cap, depth_cap), dtype=np.int64),
        np.empty((depth_cap, depth_cap)),
        np.empty((depth_cap, depth_cap)),
        np.empty((depth_cap, depth_cap)),
    )
    row_phi = np.zeros(d)
    for tree in model.trees:
        feature, threshold, left, right, value, cover = tree
        if background is not None:
            cover = _count_covers(feature, threshold, left, right, background)
            if cover[0] == 0:
                raise ValueError("background reaches no tree node")
        expected = _expected_values(feature, left, right, value, cover)
        base += expected[0]
        coverf = cover.astype(np.float64)
        for i in range(n):
            row_phi[:] = 0.0
            _tree_shap_row(
                feature, threshold, left, right, expected, coverf, rows[i], row_phi, bufs
            )
            phi[i] += row_phi
    return ShapMatrix(
        values=phi / model.n_trees,
        base_value=base / model.n_trees,
        feature_columns=list(model.feature_columns),
    )


def global_importance(shap: ShapMatrix, matrix: FeatureMatrix) -> ImportanceReport:
    """Mean absolute attribution per feature, grouped by column source."""
    if shap.feature_columns and shap.feature_columns != matrix.columns:
        raise ValueError("shap matrix and feature matrix disagree on columns")
    mean_abs = np.abs(shap.values).mean(axis=0)
    groups: dict[str, float] = {}
    for meta, value in zip(matrix.meta, mean_abs):
        groups[meta.source] = groups.get(meta.source, 0.0) + float(value)
    order = np.argsort(-mean_abs, kind="stable")
    ranking = [
        (matrix.columns[j], float(mean_abs[j]), matrix.meta[j].source) for j in order
    ]
    return ImportanceReport(
        feature_columns=matrix.columns,
        mean_abs_shap=mean_abs,
        group_sums=groups,
        ranking=ranking,
    )


@dataclass
class DependenceExport:
    feature: str
    color_feature: str
    feature_values: np.ndarray
    shap_values: np.ndarray
    color_values: np.ndarray
    sentinel_mask: np.ndarray      # rows whose feature value is the sentinel
    pearson_rho: float | None      # on non-sentinel rows; None when undefined
    band_low: float                # global 10th percentile of all SHAP values
    band_high: float               # global 90th percentile
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray


def dependence_export(
    shap: ShapMatrix,
    matrix: FeatureMatrix,
    feature: str,
    color_feature: str,
    n_bins: int = 30,
) -> DependenceExport:
    """Scatter data for one feature: (value, phi, color value) triples plus
    the global 10th/90th SHAP band and a feature histogram.

    Sentinel rows stay in the export but are flagged and excluded from the
    correlation, which they would otherwise fabricate.
    """
    j = matrix.columns.index(feature)
    cj = matrix.columns.index(color_feature)
    x = matrix.values[:, j]
    phi = shap.values[:, j]
    sentinel = matrix.meta[j].sentinel
    mask = np.zeros(len(x), dtype=bool) if sentinel is None else (x == sentinel)

    keep_x = x[~mask]
    keep_phi = phi[~mask]
    rho: float | None = None
    if len(keep_x) >= 2 and np.std(keep_x) > 0 and np.std(keep_phi) > 0:
        rho = float(np.corrcoef(keep_x, keep_phi)[0, 1])

    band_low, band_high = np.quantile(shap.values, [0.1, 0.9])
    counts, edges = np.histogram(keep_x, bins=n_bins)
    return DependenceExport(
        feature=feature,
        color_feature=color_feature,
        feature_values=x,
        shap_values=phi,
        color_values=matrix.values[:, cj],
        sentinel_mask=mask,
        pearson_rho=rho,
        band_low=float(band_low),
        band_high=float(band_high),
        histogram_counts=counts,
        histogram_edges=edges,
    )
