"""Honest causal trees: splits chosen on one half of the rows, leaf effects
estimated on the other half."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from .binning import Binner


class ArmMissingError(ValueError):
    """A treatment arm is absent where an effect must be estimated."""


@dataclass(frozen=True)
class HonestTreeParams:
    min_leaf: int = 10
    mtry: int | None = None
    honest_fraction: float = 0.5
    max_depth: int = -1

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if not 0.0 < self.honest_fraction < 1.0:
            raise ValueError("honest_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class HonestTree:
    """Node arrays of one tree plus the effect estimate at every node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    effect: np.ndarray
    est_count: np.ndarray
    structure_rows: np.ndarray
    estimation_rows: np.ndarray

    def leaves(self, codes: np.ndarray) -> np.ndarray:
        return _engine.apply_tree(codes, self.feature, self.threshold, self.left, self.right)


def causal_stats(treatment: np.ndarray, outcome: np.ndarray,
                 w_resid: np.ndarray | None = None, y_resid: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Per-row statistics and criterion kind for the tree kernels."""
    w = np.asarray(treatment, dtype=np.float64)
    if w_resid is None:
        return _engine.CAUSAL_ARMS, np.column_stack([w, np.asarray(outcome, dtype=np.float64)])
    return _engine.CAUSAL_CENTERED, np.column_stack([w_resid, y_resid, w])


def grow_honest(kind: int, codes: np.ndarray, n_bins: np.ndarray, stats: np.ndarray, treatment: np.ndarray,
                struct: np.ndarray, est: np.ndarray, params: HonestTreeParams, seed: int) -> HonestTree:
    """Grow on ``struct`` rows, estimate node effects on ``est`` rows."""
    w = treatment[struct]
    if not (w.any() and (~w.astype(bool)).any()):
        raise ArmMissingError("a treatment arm is absent from the structure half at the root")
    p = codes.shape[1]
    mtry = p if params.mtry is None else min(params.mtry, p)
    rows = np.sort(struct).astype(np.int64)
    feature, threshold, left, right, parent, depth, _, _ = _engine.grow_tree(
        kind, codes, n_bins, rows, stats, params.max_depth, params.min_leaf, mtry, seed, 0.0)
    root_effect, ok = _engine._child_effect(kind, *_summed(kind, stats, rows))
    est = np.sort(est).astype(np.int64)
    leaf = _engine.apply_tree(codes[est], feature, threshold, left, right)
    effect, count = _engine.honest_node_values(kind, leaf, stats, est, parent, root_effect if ok else 0.0)
    return HonestTree(feature, threshold, left, right, parent, depth, effect, count, rows, est)


def _summed(kind: int, stats: np.ndarray, rows: np.ndarray) -> tuple[float, float, float, float]:
    s = stats[rows]
    if kind == _engine.CAUSAL_CENTERED:
        return float(s[:, 0] @ s[:, 0]), float(s[:, 0] @ s[:, 1]), float(s[:, 2].sum()), float(len(rows))
    return float(s[:, 0].sum()), float(s[:, 0] @ s[:, 1]), float((1 - s[:, 0]) @ s[:, 1]), float(len(rows))


def split_halves(rows: np.ndarray, honest_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    rows = rng.permutation(rows)
    k = min(max(1, int(round(honest_fraction * len(rows)))), len(rows) - 1)
    return rows[:k], rows[k:]


def fit_honest_tree(features: np.ndarray, treatment: np.ndarray, outcome: np.ndarray,
                    params: HonestTreeParams = HonestTreeParams(), seed: int = 0,
                    w_resid: np.ndarray | None = None, y_resid: np.ndarray | None = None,
                    binner: Binner | None = None) -> tuple[HonestTree, Binner]:
    """Fit one honest causal tree.

    ``honest_fraction`` of the rows (chosen by ``seed``) pick the splits; the
    rest give each node ``mean(y | treated) - mean(y | control)``, or the
    residual-on-residual slope when residuals are supplied.  Nodes whose
    estimation rows lack an arm inherit their parent's effect.
    """
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(treatment, dtype=np.float64)
    if not np.all((w == 0) | (w == 1)):
        raise ValueError("treatment must be 0/1")
    if not (w.any() and (w == 0).any()):
        raise ArmMissingError("both treatment arms must be present")
    binner = binner or Binner.fit(x)
    codes = binner.transform(x)
    kind, stats = causal_stats(w, outcome, w_resid, y_resid)
    rng = np.random.Generator(np.random.PCG64(seed))
    struct, est = split_halves(np.arange(len(w)), params.honest_fraction, rng)
    tree = grow_honest(kind, codes, binner.n_bins, stats, w, struct, est, params, int(rng.integers(0, 2 ** 31)))
    return tree, binner
