"""End-to-end wiring: dataset -> red flags -> networks -> feature matrix.

Shared by the CLI commands and the test fixtures so every consumer goes
through the identical code path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import LabeledDataset
from .features import (
    FeatureMatrix,
    YearNetwork,
    assemble,
    compute_year_network,
    encode,
    party_aggregates,
)
from .redflags import RedFlagTable, compute_contract_red_flags

__all__ = ["FeatureConfig", "FeatureBuild", "build_features"]


@dataclass(frozen=True)
class FeatureConfig:
    exact_threshold: int = 2000
    n_pivots: int = 256
    seed: int = 0


@dataclass
class FeatureBuild:
    matrix: FeatureMatrix
    flags: RedFlagTable
    networks: dict[int, YearNetwork]


def build_features(dataset: LabeledDataset, config: FeatureConfig | None = None) -> FeatureBuild:
    config = config or FeatureConfig()
    flags = compute_contract_red_flags(dataset)
    networks = {
        year: compute_year_network(
            dataset,
            flags.cri_values,
            year,
            exact_threshold=config.exact_threshold,
            n_pivots=config.n_pivots,
            seed=config.seed,
        )
        for year in sorted(dataset.year_index)
    }
    supplier_aggs = {
        year: party_aggregates(dataset, flags.cri_values, year, "supplier")
        for year in sorted(dataset.year_index)
    }
    buyer_aggs = {
        year: party_aggregates(dataset, flags.cri_values, year, "buyer")
        for year in sorted(dataset.year_index)
    }
    raw = assemble(dataset, flags, networks, supplier_aggs, buyer_aggs)
    return FeatureBuild(matrix=encode(raw), flags=flags, networks=networks)
