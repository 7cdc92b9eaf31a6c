"""Company-based undersampled splits, CV folds, and temporal splits.

Suppliers never straddle a train/test or fold boundary, and heavy suppliers
are thinned only on the training side; test and calibration rows are left
untouched so evaluation reflects the deployment distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import LabeledDataset, SanctionRecord, apply_labels, apply_labels_with_cutoff

__all__ = [
    "SplitPlan",
    "TemporalSplit",
    "company_split",
    "undersample_top",
    "cv_folds",
    "plan_company_split",
    "temporal_split",
    "save_split_plan",
    "load_split_plan",
]


@dataclass
class SplitPlan:
    train_indices: np.ndarray        # undersampled rows of fold companies
    test_indices: np.ndarray         # all rows of test companies, untouched
    calibration_indices: np.ndarray  # all rows of calibration companies, untouched
    fold_assignment: dict[str, int]  # fold company -> fold id in 1..k
    undersample_cap: int
    seed: int
    params: dict = field(default_factory=dict)

    def fold_rows(self, dataset: LabeledDataset, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train rows, held-out rows) for one CV fold, both within the plan's
        train row set."""
        suppliers = dataset.supplier_ids[self.train_indices]
        held_companies = {s for s, f in self.fold_assignment.items() if f == fold}
        held_mask = np.isin(suppliers, sorted(held_companies))
        return self.train_indices[~held_mask], self.train_indices[held_mask]


def company_split(
    supplier_ids: np.ndarray, test_fraction: float = 0.30, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Uniform random partition of supplier ids into train and test sides.

    Rounds to the nearest count with a minimum of one company per side.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must lie in (0, 1)")
    unique = sorted(set(np.asarray(supplier_ids).tolist()))
    if len(unique) < 2:
        raise ValueError("need at least 2 suppliers to split")
    n_test = int(math.floor(len(unique) * test_fraction + 0.5))
    n_test = min(max(n_test, 1), len(unique) - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(unique))
    test = sorted(unique[i] for i in order[:n_test])
    train = sorted(unique[i] for i in order[n_test:])
    return train, test


def undersample_top(
    row_indices: np.ndarray,
    row_suppliers: np.ndarray,
    top_fraction: float = 0.05,
    cap_quantile: float = 0.95,
    seed: int = 0,
    counts_basis: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Thin the heaviest suppliers down to the cap; everyone else untouched.

    The cap is ceil(Q_{cap_quantile}) of the per-supplier contract counts in
    ``counts_basis`` (default: the rows being sampled, i.e. the
    pre-undersampling train distribution). A supplier joins the top set only
    when its count is strictly above the (1 - top_fraction) quantile.
    """
    row_indices = np.asarray(row_indices)
    row_suppliers = np.asarray(row_suppliers)
    basis = row_suppliers if counts_basis is None else np.asarray(counts_basis)
    ids, counts = np.unique(basis, return_counts=True)
    threshold = float(np.quantile(counts, 1.0 - top_fraction))
    cap = int(math.ceil(float(np.quantile(counts, cap_quantile))))
    count_of = dict(zip(ids.tolist(), counts.tolist()))

    rng = np.random.default_rng(seed)
    keep_mask = np.ones(len(row_indices), dtype=bool)
    for supplier in sorted(set(row_suppliers.tolist())):
        if count_of.get(supplier, 0) <= threshold:
            continue
        positions = np.flatnonzero(row_suppliers == supplier)
        if len(positions) <= cap:
            continue
        kept = rng.choice(positions, size=cap, replace=False)
        drop = np.setdiff1d(positions, kept)
        keep_mask[drop] = False
    return row_indices[keep_mask], cap


def cv_folds(
    companies: list[str], k: int = 4, seed: int = 0
) -> tuple[dict[str, int], list[str]]:
    """Partition companies into k folds plus one calibration group of equal
    size (within one)."""
    if k < 2:
        raise ValueError("k must be at least 2")
    companies = sorted(companies)
    if len(companies) < k + 1:
        raise ValueError(f"need at least {k + 1} companies for {k} folds plus calibration")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(companies))
    groups = np.array_split(order, k + 1)
    assignment = {}
    for fold, group in enumerate(groups[:k], start=1):
        for i in group:
            assignment[companies[i]] = fold
    calibration = sorted(companies[i] for i in groups[k])
    return assignment, calibration


def plan_company_split(
    dataset: LabeledDataset,
    test_fraction: float = 0.30,
    k: int = 4,
    top_fraction: float = 0.05,
    cap_quantile: float = 0.95,
    seed: int = 0,
) -> SplitPlan:
    """The full transductive protocol: company split, fold/calibration
    partition, then undersampling of the fold companies' rows."""
    suppliers = dataset.supplier_ids
    train_cos, test_cos = company_split(suppliers, test_fraction, seed)
    assignment, calibration_cos = cv_folds(train_cos, k, seed)

    train_side_mask = np.isin(suppliers, train_cos)
    fold_mask = np.isin(suppliers, sorted(assignment))
    calib_mask = np.isin(suppliers, calibration_cos)
    test_mask = np.isin(suppliers, test_cos)

    fold_rows = np.flatnonzero(fold_mask)
    train_rows, cap = undersample_top(
        fold_rows,
        suppliers[fold_rows],
        top_fraction=top_fraction,
        cap_quantile=cap_quantile,
        seed=seed,
        counts_basis=suppliers[train_side_mask],
    )
    return SplitPlan(
        train_indices=train_rows,
        test_indices=np.flatnonzero(test_mask),
        calibration_indices=np.flatnonzero(calib_mask),
        fold_assignment=assignment,
        undersample_cap=cap,
        seed=seed,
        params={
            "test_fraction": test_fraction,
            "k": k,
            "top_fraction": top_fraction,
            "cap_quantile": cap_quantile,
        },
    )


@dataclass
class TemporalSplit:
    """Inductive setting: train on early years with sanctions hidden past the
    cutoff, evaluate on a later year with full labels."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    train_labels: np.ndarray
    test_labels: np.ndarray
    train_years: tuple[int, ...]
    test_year: int
    sanction_cutoff: int


def temporal_split(
    dataset: LabeledDataset,
    sanctions: list[SanctionRecord],
    train_years: list[int],
    test_year: int,
    sanction_cutoff: int,
) -> TemporalSplit:
    train_years = tuple(sorted(int(y) for y in train_years))
    if test_year in train_years:
        raise ValueError("test year must not appear among the training years")
    if sanction_cutoff > max(train_years):
        raise ValueError("sanction cutoff cannot exceed the last training year")
    years = dataset.years
    train_idx = np.flatnonzero(np.isin(years, train_years))
    test_idx = np.flatnonzero(years == test_year)
    if len(test_idx) == 0:
        raise ValueError(f"no contracts in test year {test_year}")
    if len(train_idx) == 0:
        raise ValueError("no contracts in the training years")
    capped = apply_labels_with_cutoff(dataset, sanctions, sanction_cutoff)
    full = apply_labels(dataset, sanctions)
    return TemporalSplit(
        train_indices=train_idx,
        test_indices=test_idx,
        train_labels=capped.labels[train_idx],
        test_labels=full.labels[test_idx],
        train_years=train_years,
        test_year=int(test_year),
        sanction_cutoff=int(sanction_cutoff),
    )


def save_split_plan(plan: SplitPlan, path):
    payload = {
        "schema_version": 1,
        "train_indices": plan.train_indices.tolist(),
        "test_indices": plan.test_indices.tolist(),
        "calibration_indices": plan.calibration_indices.tolist(),
        "fold_assignment": plan.fold_assignment,
        "undersample_cap": plan.undersample_cap,
        "seed": plan.seed,
        "params": plan.params,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_split_plan(path) -> SplitPlan:
    with open(path) as fh:
        payload = json.load(fh)
    return SplitPlan(
        train_indices=np.array(payload["train_indices"], dtype=np.int64),
        test_indices=np.array(payload["test_indices"], dtype=np.int64),
        calibration_indices=np.array(payload["calibration_indices"], dtype=np.int64),
        fold_assignment={k: int(v) for k, v in payload["fold_assignment"].items()},
        undersample_cap=int(payload["undersample_cap"]),
        seed=int(payload["seed"]),
        params=payload["params"],
    )
