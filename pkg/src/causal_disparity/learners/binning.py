from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_BINS = 255


@dataclass(frozen=True)
class Binner:
    """Per-feature cut points; code(x) = number of cuts strictly below x.

    Columns with at most ``max_bins`` distinct values are cut at midpoints
    between consecutive values, so every distinct value gets its own bin.
    Wider columns are cut at quantiles.
    """

    cuts: tuple[np.ndarray, ...]

    @classmethod
    def fit(cls, features: np.ndarray, max_bins: int = MAX_BINS) -> "Binner":
        features = np.asarray(features, dtype=np.float64)
        cuts = []
        for j in range(features.shape[1]):
            distinct = np.unique(features[:, j])
            if len(distinct) <= max_bins:
                c = (distinct[:-1] + distinct[1:]) / 2.0
            else:
                q = np.quantile(features[:, j], np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
                c = np.unique(q)
            cuts.append(c)
        return cls(tuple(cuts))

    @property
    def n_features(self) -> int:
        return len(self.cuts)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(c) + 1 for c in self.cuts], dtype=np.int64)

    def transform(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got "
                             f"{features.shape[1] if features.ndim == 2 else features.shape}")
        codes = np.empty(features.shape, dtype=np.uint8)
        for j, c in enumerate(self.cuts):
            codes[:, j] = np.searchsorted(c, features[:, j], side="left")
        return codes

    def threshold(self, feature: int, bin_index: int) -> float:
        """Real-valued cut for a split ``code <= bin_index``."""
        return float(self.cuts[feature][bin_index])
