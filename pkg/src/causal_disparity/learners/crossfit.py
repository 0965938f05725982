from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..rng import substream, subseed
from .models import LearnerSpec, fit, predict


@dataclass(frozen=True)
class CrossFitPlan:
    """Assignment of every row to one of ``k`` folds."""

    k: int
    fold_of: np.ndarray
    seed: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("cross-fitting needs k >= 2")
        counts = np.bincount(self.fold_of, minlength=self.k)
        if len(counts) != self.k or np.any(counts == 0):
            raise ValueError("every fold must be non-empty")

    @classmethod
    def make(cls, n: int, k: int, seed: int, strata: np.ndarray | None = None) -> "CrossFitPlan":
        """Random balanced folds; with ``strata``, balanced within each stratum."""
        if k > n:
            raise ValueError(f"cannot split {n} rows into {k} folds")
        rng = substream(seed, "folds")
        fold_of = np.empty(n, dtype=np.int64)
        if strata is None:
            fold_of[rng.permutation(n)] = np.arange(n) % k
        else:
            offset = 0
            for label in np.unique(strata):
                rows = np.flatnonzero(strata == label)
                fold_of[rng.permutation(rows)] = (np.arange(len(rows)) + offset) % k
                offset += len(rows)
        return cls(k, fold_of, seed)

    @property
    def n(self) -> int:
        return len(self.fold_of)


def cross_fit_predict(
    features: np.ndarray,
    targets: np.ndarray,
    spec: LearnerSpec,
    plan: CrossFitPlan,
    predict_features: np.ndarray | Sequence[np.ndarray] | None = None,
    train_mask: np.ndarray | None = None,
    seed: int = 0,
) -> np.ndarray | list[np.ndarray]:
    """Out-of-fold predictions.

    Row ``i`` is scored by the model trained on rows outside ``fold_of[i]``
    (restricted to ``train_mask`` when given).  ``predict_features`` may be
    one alternate matrix or a list of them; each row is then scored at its
    alternate feature row by its own held-out-fold model, and a list of
    prediction vectors is returned for a list input.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(x) != plan.n or len(y) != plan.n:
        raise ValueError("plan does not cover every row")
    single = predict_features is None or isinstance(predict_features, np.ndarray)
    alts = [x] if predict_features is None else ([predict_features] if single else list(predict_features))
    for a in alts:
        if a.shape != x.shape:
            raise ValueError("alternate features must match the training matrix shape")
    small = np.flatnonzero(np.bincount(plan.fold_of, minlength=plan.k) < 2)
    if len(small):
        raise ValueError(f"fold {int(small[0])} has fewer than 2 rows")
    mask = np.ones(plan.n, dtype=bool) if train_mask is None else np.asarray(train_mask, dtype=bool)
    outs = [np.empty(plan.n) for _ in alts]
    for fold in range(plan.k):
        held = plan.fold_of == fold
        train = mask & ~held
        if train.sum() < 2:
            raise ValueError(f"fold {fold}: fewer than 2 training rows outside the fold")
        model = fit(x[train], y[train], spec, seed=subseed(seed, "crossfit", fold))
        for a, out in zip(alts, outs):
            out[held] = predict(model, a[held])
    return outs[0] if single else outs
