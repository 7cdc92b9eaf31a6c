"""Synthetic procurement generator with planted fraud structure.

Fraud suppliers attach to a dense buyer core, receive a moderately elevated
direct-award share (capped well below saturation), mix round-number prices
into their invoices, and concentrate activity in few calendar weeks.
Sanctions are a uniform subsample of the fraud suppliers, so observed labels
are selected completely at random given fraud status. Ground truth is
emitted separately and never read by any training path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

__all__ = ["SynthConfig", "SynthOutput", "generate", "gini", "concentration_report"]


@dataclass(frozen=True)
class SynthConfig:
    n_buyers: int = 200
    n_suppliers: int = 2000
    years: tuple[int, ...] = (2015, 2016, 2017, 2018, 2019)
    contracts_per_year: int = 10_000
    size_exponent: float = 1.0          # supplier weight ~ rank^-exponent
    fraud_fraction: float = 0.10
    sanction_rate: float = 0.5          # SCAR observation frequency
    n_core_buyers: int = 20
    core_attachment: float = 0.8        # fraud home-buyer picks land in the core
    clean_direct_rate: float = 0.50
    fraud_direct_rate: float = 0.72     # kept below saturation on purpose
    benford_violation_rate: float = 0.6
    clean_single_bidder_rate: float = 0.10
    fraud_single_bidder_rate: float = 0.45
    fraud_weeks: tuple[int, int] = (1, 3)    # active-week count range, high exclusive
    clean_weeks: tuple[int, int] = (6, 18)
    fraud_submission_days: tuple[int, int] = (0, 6)    # risky 0-5 band
    clean_submission_days: tuple[int, int] = (7, 30)
    fraud_decision_days: tuple[int, int] = (0, 5)      # risky 0-4 band
    clean_decision_days: tuple[int, int] = (14, 60)
    top_rank_fraud_exempt: int = 10     # heaviest suppliers stay clean
    seed: int = 0

    def without_signal(self) -> "SynthConfig":
        """Same marginals, no fraud/clean differences: labels are pure noise."""
        from dataclasses import replace

        return replace(
            self,
            core_attachment=0.0,
            fraud_direct_rate=self.clean_direct_rate,
            benford_violation_rate=0.0,
            fraud_single_bidder_rate=self.clean_single_bidder_rate,
            fraud_weeks=self.clean_weeks,
            fraud_submission_days=self.clean_submission_days,
            fraud_decision_days=self.clean_decision_days,
            top_rank_fraud_exempt=0,
        )

    def validate(self):
        if not (0.0 < self.fraud_fraction < 1.0):
            raise ValueError("fraud_fraction must lie in (0, 1)")
        if not (0.0 < self.sanction_rate <= 1.0):
            raise ValueError("sanction_rate must lie in (0, 1]")
        if self.fraud_direct_rate > 0.9:
            raise ValueError(
                "fraud direct-award share above 0.9 saturates the procedural signal"
            )
        total = self.contracts_per_year * len(self.years)
        if total < self.n_suppliers:
            raise ValueError("need at least one contract per supplier on average")
        if self.n_core_buyers >= self.n_buyers:
            raise ValueError("core must be a strict subset of buyers")
        if self.n_suppliers < 20:
            raise ValueError("need at least 20 suppliers")


@dataclass
class SynthOutput:
    contracts_csv: str
    sanctions_csv: str
    ground_truth_csv: str
    fraud_suppliers: list[str]
    sanctioned_suppliers: list[str]
    notes: dict = field(default_factory=dict)


SUPPLY_TYPES = ("goods", "services", "works", "leases")
VENUES = ("national", "international", "")
SIZES = ("micro", "small", "medium", "large")


def _pick_fraud(config: SynthConfig, rng) -> np.ndarray:
    """Stratified fraud placement across size deciles, skipping the heaviest
    ranks so one giant cannot dominate the label mass."""
    n = config.n_suppliers
    eligible = np.arange(config.top_rank_fraud_exempt, n)
    fraud = np.zeros(n, dtype=bool)
    strata = np.array_split(eligible, 10)
    for stratum in strata:
        k = int(round(len(stratum) * config.fraud_fraction))
        if k:
            fraud[rng.choice(stratum, size=k, replace=False)] = True
    return fraud


def generate(config: SynthConfig) -> SynthOutput:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_sup, n_buy = config.n_suppliers, config.n_buyers

    weights = np.arange(1, n_sup + 1, dtype=float) ** (-config.size_exponent)
    weights /= weights.sum()
    fraud = _pick_fraud(config, rng)
    sanctioned = fraud & (rng.random(n_sup) < config.sanction_rate)

    core = np.arange(config.n_core_buyers)
    non_core = np.arange(config.n_core_buyers, n_buy)

    # home buyers per supplier
    home_buyers: list[np.ndarray] = []
    for i in range(n_sup):
        k = 1 + min(3, rng.poisson(1.0))
        picks = []
        for _ in range(k):
            if fraud[i] and rng.random() < config.core_attachment:
                picks.append(int(rng.choice(core)))
            else:
                picks.append(int(rng.integers(0, n_buy)))
        home_buyers.append(np.unique(np.array(picks)))

    # active calendar weeks per supplier-year: fraud concentrates its spend
    def active_weeks(is_fraud: bool) -> np.ndarray:
        lo, hi = config.fraud_weeks if is_fraud else config.clean_weeks
        n_weeks = int(rng.integers(lo, hi))
        return np.sort(rng.choice(50, size=min(n_weeks, 50), replace=False))

    header = (
        "contract_id,buyer_id,supplier_id,sign_date,price_mxn,procedure_type,"
        "direct_origin,supply_type,legal_framework,tender_publication_date,"
        "submission_deadline,decision_date,n_bidders,supplier_size,venue"
    )
    lines = [header]
    cid = 0
    for year in config.years:
        year_start = date(year, 1, 4)  # safely inside ISO week 1
        supplier_draw = rng.choice(n_sup, size=config.contracts_per_year, p=weights)
        weeks_of: dict[int, np.ndarray] = {}
        for s in sorted(set(supplier_draw.tolist())):
            weeks_of[s] = active_weeks(bool(fraud[s]))
        for s in supplier_draw:
            s = int(s)
            is_fraud = bool(fraud[s])
            if rng.random() < 0.85:
                buyer = int(rng.choice(home_buyers[s]))
            else:
                buyer = int(rng.integers(0, n_buy))
            week = int(rng.choice(weeks_of[s]))
            sign = year_start + timedelta(days=7 * week + int(rng.integers(0, 7)))

            direct_rate = config.fraud_direct_rate if is_fraud else config.clean_direct_rate
            is_direct = rng.random() < direct_rate
            if is_direct:
                procedure = "direct"
                origin = "real" if rng.random() < 0.8 else "post_open"
                publication = deadline = decision = ""
                n_bidders = ""
                legal = f"art-{int(rng.integers(1, 5))}"
            else:
                procedure = "open" if rng.random() < 0.7 else "at_least_three"
                origin = "not_applicable"
                legal = ""
                single_rate = (
                    config.fraud_single_bidder_rate
                    if is_fraud
                    else config.clean_single_bidder_rate
                )
                if rng.random() < 0.3:
                    n_bidders = ""
                elif rng.random() < single_rate:
                    n_bidders = "1"
                else:
                    n_bidders = str(int(rng.integers(2, 9)))
                sub_lo, sub_hi = (
                    config.fraud_submission_days if is_fraud else config.clean_submission_days
                )
                dec_lo, dec_hi = (
                    config.fraud_decision_days if is_fraud else config.clean_decision_days
                )
                sub_days = int(rng.integers(sub_lo, sub_hi))
                dec_days = int(rng.integers(dec_lo, dec_hi))
                decision_d = sign
                deadline_d = sign - timedelta(days=dec_days)
                publication_d = deadline_d - timedelta(days=sub_days)
                publication = publication_d.isoformat()
                deadline = deadline_d.isoformat()
                decision = "" if rng.random() < 0.15 else decision_d.isoformat()

            if is_fraud and rng.random() < config.benford_violation_rate:
                digit = int(rng.integers(1, 10))
                price = digit * 10.0 ** int(rng.integers(3, 7))
            else:
                price = 10.0 ** rng.uniform(3.0, 7.0)

            supply = SUPPLY_TYPES[int(rng.integers(0, len(SUPPLY_TYPES)))]
            if rng.random() < 0.05:
                supply = ""
            venue = VENUES[int(rng.integers(0, len(VENUES)))]
            size_bucket = SIZES[min(3, s * 4 // n_sup)] if rng.random() > 0.1 else ""
            lines.append(
                f"K{cid:07d},B{buyer:04d},S{s:05d},{sign.isoformat()},{price:.2f},"
                f"{procedure},{origin},{supply},{legal},{publication},{deadline},"
                f"{decision},{n_bidders},{size_bucket},{venue}"
            )
            cid += 1
    contracts_csv = "\n".join(lines) + "\n"

    sanction_lines = ["supplier_id,source,sanction_year"]
    sanctioned_ids = []
    for s in np.flatnonzero(sanctioned):
        year = int(rng.choice(config.years))
        source = "EFOS" if rng.random() < 0.6 else "PCS"
        sanction_lines.append(f"S{int(s):05d},{source},{year}")
        sanctioned_ids.append(f"S{int(s):05d}")
    sanctions_csv = "\n".join(sanction_lines) + "\n"

    truth_lines = ["supplier_id,is_fraud"]
    for s in range(n_sup):
        truth_lines.append(f"S{s:05d},{1 if fraud[s] else 0}")
    ground_truth_csv = "\n".join(truth_lines) + "\n"

    return SynthOutput(
        contracts_csv=contracts_csv,
        sanctions_csv=sanctions_csv,
        ground_truth_csv=ground_truth_csv,
        fraud_suppliers=[f"S{int(s):05d}" for s in np.flatnonzero(fraud)],
        sanctioned_suppliers=sanctioned_ids,
        notes={
            "n_fraud": int(fraud.sum()),
            "n_sanctioned": int(sanctioned.sum()),
        },
    )


def gini(counts) -> float:
    """Gini coefficient of a non-negative count vector."""
    x = np.sort(np.asarray(counts, dtype=float))
    n = len(x)
    total = x.sum()
    if n == 0 or total == 0:
        return 0.0
    return float(2.0 * np.sum(np.arange(1, n + 1) * x) / (n * total) - (n + 1) / n)


def concentration_report(supplier_ids) -> dict[str, float]:
    """Gini of per-supplier contract counts and the top-5% contract share."""
    _, counts = np.unique(np.asarray(supplier_ids), return_counts=True)
    top_k = max(1, int(len(counts) * 0.05))
    share = float(np.sort(counts)[::-1][:top_k].sum() / counts.sum())
    return {
        "gini": gini(counts),
        "top5_share": share,
        "n_suppliers": float(len(counts)),
    }
