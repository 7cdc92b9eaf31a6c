"""Random Fourier features for the RBF kernel exp(-gamma ||x - y||^2).

Frequencies are drawn from N(0, 2*gamma) per dimension and phases uniformly
on [0, 2pi); feature j of x is sqrt(2/D) * cos(w_j . x + b_j). Inputs are
z-scored with training statistics before the map is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Standardizer", "RffMap", "fit_standardizer", "fit_rff", "rff_transform"]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # constant columns carry std 1 so they map to 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def fit_standardizer(X: np.ndarray) -> Standardizer:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Standardizer(mean=mean, std=std)


@dataclass(frozen=True)
class RffMap:
    weights: np.ndarray  # (n_inputs, n_components)
    phases: np.ndarray   # (n_components,)
    gamma: float

    @property
    def n_components(self) -> int:
        return len(self.phases)


def fit_rff(n_inputs: int, gamma: float, n_components: int, seed) -> RffMap:
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, np.sqrt(2.0 * gamma), size=(n_inputs, n_components))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_components)
    return RffMap(weights=weights, phases=phases, gamma=gamma)


def rff_transform(rff: RffMap, X: np.ndarray) -> np.ndarray:
    return np.sqrt(2.0 / rff.n_components) * np.cos(X @ rff.weights + rff.phases)
