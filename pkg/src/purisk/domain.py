"""Contract/sanction data model, CSV ingestion, and positive-unlabeled labels.

A contract is labeled positive when its supplier appears in the sanction set,
regardless of when the sanction happened; everything else stays unlabeled.
There is never a "negative" label.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date
from functools import cached_property

import numpy as np

__all__ = [
    "PROCEDURE_TYPES",
    "DIRECT_ORIGINS",
    "CONTRACT_COLUMNS",
    "SANCTION_COLUMNS",
    "SchemaError",
    "CsvSchema",
    "ContractRecord",
    "SanctionRecord",
    "ParseReport",
    "LabeledDataset",
    "parse_contracts",
    "parse_sanctions",
    "apply_labels",
    "apply_labels_with_cutoff",
    "label_similarity_diagnostic",
    "SimilarityDiagnostic",
]

PROCEDURE_TYPES = ("open", "at_least_three", "direct")
DIRECT_ORIGINS = ("real", "post_open", "not_applicable")
SANCTION_SOURCES = ("EFOS", "PCS")

CONTRACT_COLUMNS = (
    "contract_id",
    "buyer_id",
    "supplier_id",
    "sign_date",
    "price_mxn",
    "procedure_type",
    "direct_origin",
    "supply_type",
    "legal_framework",
    "tender_publication_date",
    "submission_deadline",
    "decision_date",
    "n_bidders",
    "supplier_size",
    "venue",
)
SANCTION_COLUMNS = ("supplier_id", "source", "sanction_year")


class SchemaError(ValueError):
    """The input stream does not match the declared CSV schema."""


@dataclass(frozen=True)
class CsvSchema:
    """Parse-time configuration; sign dates outside the range are rejected."""

    year_min: int = 2000
    year_max: int = 2100


@dataclass(frozen=True)
class ContractRecord:
    contract_id: str
    buyer_id: str
    supplier_id: str
    sign_date: date
    price: float
    procedure_type: str
    direct_origin: str
    supply_type: str | None = None
    legal_framework: str | None = None
    tender_publication_date: date | None = None
    submission_deadline: date | None = None
    decision_date: date | None = None
    n_bidders: int | None = None
    supplier_size: str | None = None
    venue: str | None = None

    @property
    def year(self) -> int:
        return self.sign_date.year

    @property
    def is_recorded_direct(self) -> bool:
        return self.procedure_type == "direct"

    @property
    def is_post_direct(self) -> bool:
        return self.procedure_type == "direct" and self.direct_origin == "post_open"


@dataclass(frozen=True)
class SanctionRecord:
    supplier_id: str
    source: str
    sanction_year: int

    def __post_init__(self):
        if not self.supplier_id:
            raise ValueError("sanction supplier_id must be non-empty")
        if self.source not in SANCTION_SOURCES:
            raise ValueError(f"unknown sanction source {self.source!r}")


@dataclass
class ParseReport:
    n_accepted: int = 0
    rejections: list[tuple[int, str]] = field(default_factory=list)  # (row number, reason)
    notes: list[str] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejections)


@dataclass(frozen=True)
class LabeledDataset:
    """Ordered contracts plus per-contract positive/unlabeled flags.

    ``labels`` is all zeros for a dataset that has not been labeled yet.
    """

    contracts: tuple[ContractRecord, ...]
    labels: np.ndarray  # int8: 1 positive, 0 unlabeled
    report: ParseReport

    def __post_init__(self):
        if len(self.labels) != len(self.contracts):
            raise ValueError("labels and contracts length mismatch")

    def __len__(self) -> int:
        return len(self.contracts)

    @cached_property
    def supplier_ids(self) -> np.ndarray:
        return np.array([c.supplier_id for c in self.contracts], dtype=object)

    @cached_property
    def buyer_ids(self) -> np.ndarray:
        return np.array([c.buyer_id for c in self.contracts], dtype=object)

    @cached_property
    def years(self) -> np.ndarray:
        return np.array([c.year for c in self.contracts], dtype=np.int64)

    @cached_property
    def prices(self) -> np.ndarray:
        return np.array([c.price for c in self.contracts], dtype=float)

    @cached_property
    def year_index(self) -> dict[int, np.ndarray]:
        out: dict[int, np.ndarray] = {}
        for year in np.unique(self.years):
            out[int(year)] = np.flatnonzero(self.years == year)
        return out

    def prevalence_by_year(self) -> dict[int, float]:
        return {
            year: float(self.labels[idx].mean()) for year, idx in self.year_index.items()
        }

    def with_labels(self, labels: np.ndarray, report: ParseReport | None = None) -> "LabeledDataset":
        return LabeledDataset(
            contracts=self.contracts,
            labels=np.asarray(labels, dtype=np.int8),
            report=report if report is not None else self.report,
        )


def _parse_date(raw: str) -> date:
    return date.fromisoformat(raw)


def _parse_optional_date(raw: str) -> date | None:
    return None if raw == "" else _parse_date(raw)


def parse_contracts(stream, schema: CsvSchema | None = None) -> tuple[LabeledDataset, ParseReport]:
    """Read a contracts CSV into an unlabeled dataset plus a rejection report.

    Every well-formed row becomes a record; malformed rows are dropped with a
    per-row reason. A missing column is a schema error, not a row problem.
    """
    schema = schema or CsvSchema()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise SchemaError("empty stream: no header row")
    missing = [c for c in CONTRACT_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"missing mandatory columns: {', '.join(missing)}")

    report = ParseReport()
    records: list[ContractRecord] = []
    seen_ids: set[str] = set()
    for rownum, row in enumerate(reader, start=2):  # 1 is the header line
        reason = None
        try:
            record = _row_to_record(row, schema, seen_ids)
        except _RowError as exc:
            reason = str(exc)
        if reason is not None:
            report.rejections.append((rownum, reason))
            continue
        seen_ids.add(record.contract_id)
        records.append(record)
    report.n_accepted = len(records)
    dataset = LabeledDataset(
        contracts=tuple(records),
        labels=np.zeros(len(records), dtype=np.int8),
        report=report,
    )
    return dataset, report


class _RowError(ValueError):
    pass


def _row_to_record(row: dict, schema: CsvSchema, seen_ids: set[str]) -> ContractRecord:
    contract_id = row["contract_id"].strip()
    if not contract_id:
        raise _RowError("empty contract_id")
    if contract_id in seen_ids:
        raise _RowError(f"duplicate contract_id {contract_id}")
    buyer_id = row["buyer_id"].strip()
    supplier_id = row["supplier_id"].strip()
    if not buyer_id or not supplier_id:
        raise _RowError("empty buyer_id or supplier_id")

    try:
        sign_date = _parse_date(row["sign_date"])
    except ValueError:
        raise _RowError(f"unparseable date {row['sign_date']!r}")
    if not (schema.year_min <= sign_date.year <= schema.year_max):
        raise _RowError(f"sign date {sign_date} outside configured year range")

    try:
        price = float(row["price_mxn"])
    except ValueError:
        raise _RowError(f"unparseable price {row['price_mxn']!r}")
    if not math.isfinite(price) or price < 0:
        raise _RowError(f"negative or non-finite price {row['price_mxn']!r}")

    procedure_type = row["procedure_type"].strip()
    if procedure_type not in PROCEDURE_TYPES:
        raise _RowError(f"unknown procedure_type {procedure_type!r}")
    direct_origin = row["direct_origin"].strip()
    if direct_origin == "" and procedure_type != "direct":
        direct_origin = "not_applicable"
    if direct_origin not in DIRECT_ORIGINS:
        raise _RowError(f"unknown direct_origin {direct_origin!r}")
    if (direct_origin == "not_applicable") != (procedure_type != "direct"):
        raise _RowError("direct_origin inconsistent with procedure_type")

    try:
        publication = _parse_optional_date(row["tender_publication_date"])
        deadline = _parse_optional_date(row["submission_deadline"])
        decision = _parse_optional_date(row["decision_date"])
    except ValueError as exc:
        raise _RowError(f"unparseable date: {exc}")
    if publication is not None and deadline is not None and publication > deadline:
        raise _RowError("tender publication after submission deadline")

    n_bidders_raw = row["n_bidders"].strip()
    n_bidders = None
    if n_bidders_raw != "":
        try:
            n_bidders = int(n_bidders_raw)
        except ValueError:
            raise _RowError(f"unparseable n_bidders {n_bidders_raw!r}")
        if n_bidders < 0:
            raise _RowError("negative n_bidders")

    def opt(name: str) -> str | None:
        value = row[name].strip()
        return value if value else None

    return ContractRecord(
        contract_id=contract_id,
        buyer_id=buyer_id,
        supplier_id=supplier_id,
        sign_date=sign_date,
        price=price,
        procedure_type=procedure_type,
        direct_origin=direct_origin,
        supply_type=opt("supply_type"),
        legal_framework=opt("legal_framework"),
        tender_publication_date=publication,
        submission_deadline=deadline,
        decision_date=decision,
        n_bidders=n_bidders,
        supplier_size=opt("supplier_size"),
        venue=opt("venue"),
    )


def parse_sanctions(stream) -> tuple[list[SanctionRecord], ParseReport]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise SchemaError("empty stream: no header row")
    missing = [c for c in SANCTION_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"missing mandatory columns: {', '.join(missing)}")
    report = ParseReport()
    records: list[SanctionRecord] = []
    for rownum, row in enumerate(reader, start=2):
        try:
            records.append(
                SanctionRecord(
                    supplier_id=row["supplier_id"].strip(),
                    source=row["source"].strip(),
                    sanction_year=int(row["sanction_year"]),
                )
            )
        except ValueError as exc:
            report.rejections.append((rownum, str(exc)))
    report.n_accepted = len(records)
    return records, report


def apply_labels(dataset: LabeledDataset, sanctions: list[SanctionRecord]) -> LabeledDataset:
    """Positive iff the supplier is sanctioned in any year.

    Duplicate sanction records for one supplier collapse to a single
    membership test; all sources are kept upstream in the records themselves.
    """
    sanctioned = {s.supplier_id for s in sanctions}
    labels = np.fromiter(
        (1 if c.supplier_id in sanctioned else 0 for c in dataset.contracts),
        dtype=np.int8,
        count=len(dataset),
    )
    return dataset.with_labels(labels)


def apply_labels_with_cutoff(
    dataset: LabeledDataset, sanctions: list[SanctionRecord], cutoff_year: int
) -> LabeledDataset:
    """Positive iff some sanction of the supplier has sanction_year <= cutoff.

    Used by the inductive setting to hide future sanctions from training.
    """
    sanctioned = {s.supplier_id for s in sanctions if s.sanction_year <= cutoff_year}
    labels = np.fromiter(
        (1 if c.supplier_id in sanctioned else 0 for c in dataset.contracts),
        dtype=np.int8,
        count=len(dataset),
    )
    report = ParseReport(n_accepted=dataset.report.n_accepted)
    report.rejections = list(dataset.report.rejections)
    if len(dataset) and not labels.any():
        report.notes.append(f"sanction cutoff {cutoff_year} leaves zero positive labels")
    return dataset.with_labels(labels, report)


@dataclass
class SimilarityDiagnostic:
    """Within-supplier cosine-distance summary for sanctioned suppliers."""

    per_supplier: dict[str, tuple[int, float, float]]  # supplier -> (n, mean, median)
    n_excluded_single_contract: int

    def summary(self) -> dict[str, float]:
        if not self.per_supplier:
            return {"n_suppliers": 0.0}
        means = np.array([v[1] for v in self.per_supplier.values()])
        medians = np.array([v[2] for v in self.per_supplier.values()])
        return {
            "n_suppliers": float(len(means)),
            "mean_of_means": float(means.mean()),
            "median_of_means": float(np.median(means)),
            "mean_of_medians": float(medians.mean()),
            "q90_of_means": float(np.quantile(means, 0.9)),
        }


def cosine_distance_matrix(rows: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances; two zero vectors count as identical."""
    norms = np.linalg.norm(rows, axis=1)
    sims = rows @ rows.T
    denom = np.outer(norms, norms)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, sims / np.where(denom > 0, denom, 1.0), 0.0)
    both_zero = np.outer(norms == 0, norms == 0)
    cos = np.where(both_zero, 1.0, cos)
    return np.clip(1.0 - cos, 0.0, 2.0)


def label_similarity_diagnostic(
    dataset: LabeledDataset,
    encoded_values: np.ndarray,
    column_kinds: list[str] | None = None,
) -> SimilarityDiagnostic:
    """Mean/median pairwise cosine distance among each sanctioned supplier's
    contract feature vectors.

    ``column_kinds`` (from the feature matrix metadata) lets the diagnostic
    drop missing-indicator columns so missingness does not dominate the
    similarity. Suppliers with a single contract are excluded and counted.
    """
    values = np.asarray(encoded_values, dtype=float)
    if len(values) != len(dataset):
        raise ValueError("encoded matrix not aligned with dataset rows")
    if column_kinds is not None:
        keep = [i for i, kind in enumerate(column_kinds) if kind != "missing_indicator"]
        values = values[:, keep]

    positive_rows = np.flatnonzero(dataset.labels == 1)
    by_supplier: dict[str, list[int]] = {}
    for i in positive_rows:
        by_supplier.setdefault(dataset.contracts[i].supplier_id, []).append(int(i))

    per_supplier: dict[str, tuple[int, float, float]] = {}
    excluded = 0
    for supplier, idx in sorted(by_supplier.items()):
        if len(idx) < 2:
            excluded += 1
            continue
        d = cosine_distance_matrix(values[idx])
        pairs = d[np.triu_indices(len(idx), k=1)]
        per_supplier[supplier] = (len(idx), float(pairs.mean()), float(np.median(pairs)))
    return SimilarityDiagnostic(per_supplier=per_supplier, n_excluded_single_contract=excluded)
