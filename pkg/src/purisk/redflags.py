"""Contract-level corruption risk indicators and the composite CRI.

Weights follow a fixed table of risk levels per indicator; the CRI is the
plain mean of whichever indicators are available for a contract. Buyer
dependence enters as its raw share, all other flags are categorical weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .domain import ContractRecord, LabeledDataset

__all__ = [
    "BENFORD_PROBS",
    "BenfordAssessment",
    "RedFlagVector",
    "CriScore",
    "benford_mad",
    "benford_eligibility_threshold",
    "first_significant_digit",
    "period_days",
    "submission_period_days",
    "decision_period_days",
    "red_flag_weights",
    "buyer_dependence_by_pair",
    "cri",
    "compute_contract_red_flags",
    "RedFlagTable",
]

# P(first significant digit = d) = log10(1 + 1/d)
BENFORD_PROBS = np.log10(1.0 + 1.0 / np.arange(1, 10))

_CONFORMITY_BINS = (
    (0.006, "close"),
    (0.012, "acceptable"),
    (0.016, "marginally_acceptable"),
    (math.inf, "no_conformity"),
)

BENFORD_WEIGHTS = {
    "close": 0.0,
    "acceptable": 0.25,
    "non_applicable": 0.5,
    "marginally_acceptable": 0.75,
    "no_conformity": 1.0,
}
PROCEDURE_WEIGHTS = {"open": 0.0, "at_least_three": 0.5, "direct": 1.0}


@dataclass(frozen=True)
class BenfordAssessment:
    mad: float | None
    conformity: str
    eligible: bool

    def __post_init__(self):
        if self.eligible == (self.mad is None):
            raise ValueError("mad must be present exactly when eligible")
        if (self.conformity == "non_applicable") != (not self.eligible):
            raise ValueError("conformity non_applicable exactly when not eligible")


@dataclass(frozen=True)
class RedFlagVector:
    rf_benford: float          # always present: ineligible maps to the NA weight
    rf_decision_period: float
    rf_submission_period: float
    rf_single_bidder: float | None  # the only flag that can be absent
    rf_procedure_type: float
    rf_buyer_dependence: float

    def present_weights(self) -> list[float]:
        weights = [
            self.rf_benford,
            self.rf_decision_period,
            self.rf_submission_period,
            self.rf_procedure_type,
            self.rf_buyer_dependence,
        ]
        if self.rf_single_bidder is not None:
            weights.append(self.rf_single_bidder)
        return weights


@dataclass(frozen=True)
class CriScore:
    value: float
    n_components: int


def first_significant_digit(price: float) -> int | None:
    """First nonzero digit of the decimal representation, None for 0."""
    if price <= 0 or not math.isfinite(price):
        return None
    for ch in format(price, ".12g"):
        if ch in "123456789":
            return int(ch)
    return None


def benford_eligibility_threshold(contract_counts: list[int] | np.ndarray) -> int:
    """Quantile-0.75 of per-buyer contract counts in a year, rounded up."""
    counts = np.asarray(contract_counts, dtype=float)
    if len(counts) == 0:
        return 1
    return int(math.ceil(np.quantile(counts, 0.75)))


def benford_mad(prices, eligibility_threshold: int) -> BenfordAssessment:
    """Mean absolute deviation of first-digit frequencies from Benford.

    Buyers with fewer prices than the threshold, or with no positive price at
    all, are not eligible and carry no MAD.
    """
    prices = np.asarray(prices, dtype=float)
    if len(prices) < eligibility_threshold:
        return BenfordAssessment(mad=None, conformity="non_applicable", eligible=False)
    digits = [first_significant_digit(p) for p in prices]
    digits = [d for d in digits if d is not None]
    if not digits:
        return BenfordAssessment(mad=None, conformity="non_applicable", eligible=False)
    observed = np.bincount(digits, minlength=10)[1:10] / len(digits)
    mad = float(np.abs(observed - BENFORD_PROBS).sum() / 9.0)
    for edge, name in _CONFORMITY_BINS:
        if mad < edge:
            return BenfordAssessment(mad=mad, conformity=name, eligible=True)
    raise AssertionError("unreachable: bins cover [0, inf)")


def period_days(start: date | None, end: date | None) -> int | None:
    """Whole days from start to end; None when either is absent or the order
    is reversed (a data error surfaced in diagnostics, not a crash)."""
    if start is None or end is None:
        return None
    delta = (end - start).days
    return delta if delta >= 0 else None


def submission_period_days(contract: ContractRecord) -> int | None:
    return period_days(contract.tender_publication_date, contract.submission_deadline)


def decision_period_days(contract: ContractRecord) -> int | None:
    return period_days(contract.submission_deadline, contract.decision_date)


def _decision_weight(days: int | None) -> float:
    if days is None:
        return 0.5
    if days == 0:
        return 1.0
    if days <= 4:
        return 0.75
    if days <= 13:
        return 0.25
    return 0.0  # 14 days and longer


def _submission_weight(days: int | None) -> float:
    if days is None:
        return 1.0
    if days <= 5:
        return 0.66
    if days <= 11:
        return 0.0
    return 0.33  # 12 days and longer


def red_flag_weights(
    contract: ContractRecord, benford: BenfordAssessment, buyer_dep: float
) -> RedFlagVector:
    """Map one contract's raw indicators onto the fixed risk-weight table."""
    if benford.eligible:
        rf_benford = BENFORD_WEIGHTS[benford.conformity]
    else:
        rf_benford = BENFORD_WEIGHTS["non_applicable"]
    if contract.n_bidders is None:
        rf_single = None
    else:
        rf_single = 1.0 if contract.n_bidders == 1 else 0.0
    return RedFlagVector(
        rf_benford=rf_benford,
        rf_decision_period=_decision_weight(decision_period_days(contract)),
        rf_submission_period=_submission_weight(submission_period_days(contract)),
        rf_single_bidder=rf_single,
        rf_procedure_type=PROCEDURE_WEIGHTS[contract.procedure_type],
        rf_buyer_dependence=float(buyer_dep),
    )


def cri(flags: RedFlagVector) -> CriScore:
    """Arithmetic mean of the available red-flag weights."""
    weights = flags.present_weights()
    if not weights:
        raise ValueError("CRI undefined with zero present components")
    return CriScore(value=float(np.mean(np.array(weights))), n_components=len(weights))


def buyer_dependence_by_pair(dataset: LabeledDataset) -> dict[tuple[str, str, int], float]:
    """spend(buyer, supplier, year) / spend(buyer, year) for every edge.

    A buyer-year with zero total spend maps to 0 for all its pairs.
    """
    pair_spend: dict[tuple[str, str, int], float] = {}
    buyer_spend: dict[tuple[str, int], float] = {}
    for c in dataset.contracts:
        pair = (c.buyer_id, c.supplier_id, c.year)
        pair_spend[pair] = pair_spend.get(pair, 0.0) + c.price
        by = (c.buyer_id, c.year)
        buyer_spend[by] = buyer_spend.get(by, 0.0) + c.price
    out = {}
    for (buyer, supplier, year), spend in pair_spend.items():
        total = buyer_spend[(buyer, year)]
        out[(buyer, supplier, year)] = spend / total if total > 0 else 0.0
    return out


@dataclass
class RedFlagTable:
    """Per-contract red-flag outputs for a whole dataset, row-aligned."""

    vectors: list[RedFlagVector]
    cri_values: np.ndarray      # float per contract
    benford_mad_values: np.ndarray  # float per contract, NaN when not eligible
    decision_days: np.ndarray   # float, NaN for missing
    submission_days: np.ndarray
    buyer_dependence: np.ndarray
    diagnostics: dict[str, int]


def compute_contract_red_flags(dataset: LabeledDataset) -> RedFlagTable:
    """Full red-flag pipeline: Benford per buyer-year, periods, weights, CRI."""
    n = len(dataset)
    years = dataset.years
    dependence = buyer_dependence_by_pair(dataset)

    # Benford assessment per buyer-year, eligibility threshold per year
    buyer_year_prices: dict[tuple[str, int], list[float]] = {}
    for c in dataset.contracts:
        buyer_year_prices.setdefault((c.buyer_id, c.year), []).append(c.price)
    thresholds = {}
    for year in np.unique(years):
        counts = [len(v) for (b, y), v in buyer_year_prices.items() if y == year]
        thresholds[int(year)] = benford_eligibility_threshold(counts)
    assessments = {
        key: benford_mad(prices, thresholds[key[1]])
        for key, prices in buyer_year_prices.items()
    }

    buyer_totals: dict[tuple[str, int], float] = {}
    for c in dataset.contracts:
        key = (c.buyer_id, c.year)
        buyer_totals[key] = buyer_totals.get(key, 0.0) + c.price
    zero_spend_buyer_years = {k for k, v in buyer_totals.items() if v == 0.0}

    vectors: list[RedFlagVector] = []
    cri_values = np.empty(n)
    mad_values = np.full(n, np.nan)
    dec_days = np.full(n, np.nan)
    sub_days = np.full(n, np.nan)
    dep_values = np.empty(n)
    diagnostics = {
        "reversed_period": 0,
        "zero_spend_buyer_year": len(zero_spend_buyer_years),
    }
    for i, c in enumerate(dataset.contracts):
        assessment = assessments[(c.buyer_id, c.year)]
        dep = dependence[(c.buyer_id, c.supplier_id, c.year)]
        flags = red_flag_weights(c, assessment, dep)
        vectors.append(flags)
        cri_values[i] = cri(flags).value
        if assessment.eligible:
            mad_values[i] = assessment.mad
        d = decision_period_days(c)
        if d is not None:
            dec_days[i] = d
        elif c.submission_deadline is not None and c.decision_date is not None:
            diagnostics["reversed_period"] += 1
        s = submission_period_days(c)
        if s is not None:
            sub_days[i] = s
        dep_values[i] = dep
    return RedFlagTable(
        vectors=vectors,
        cri_values=cri_values,
        benford_mad_values=mad_values,
        decision_days=dec_days,
        submission_days=sub_days,
        buyer_dependence=dep_values,
        diagnostics=diagnostics,
    )
