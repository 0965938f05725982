"""Supervised nuisance learners: boosted trees, honest regression forests and
l2-regularised linear/logistic regression."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import _engine
from .binning import Binner

BOOSTED = "boosted_stumps"
FOREST = "regression_forest"
LINEAR = "regularized_linear"
SQUARED = "squared_error"
LOGISTIC = "logistic"

REG_LAMBDA = 1.0


class DegenerateTargetWarning(UserWarning):
    """Targets were constant; a constant model was returned."""


@dataclass(frozen=True)
class LearnerSpec:
    """Learner kind, objective and hyperparameters.

    Only the fields relevant to ``kind`` are used.  ``honest_fraction`` is the
    share of each forest subsample used to choose splits (the remainder sets
    leaf values); ``None`` disables honesty.
    """

    kind: str = BOOSTED
    objective: str = SQUARED
    rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    num_trees: int = 100
    min_leaf: int = 5
    mtry: int | None = None
    honest_fraction: float | None = 0.5
    sample_fraction: float = 0.5
    l2_penalty: float = 1e-6
    max_iterations: int = 100
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.kind not in (BOOSTED, FOREST, LINEAR):
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.objective not in (SQUARED, LOGISTIC):
            raise ValueError(f"unknown objective {self.objective!r}")
        for name in ("rounds", "max_depth", "num_trees", "min_leaf", "max_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be at least 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.honest_fraction is not None and not 0.0 < self.honest_fraction < 1.0:
            raise ValueError("honest_fraction must lie in (0, 1)")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be non-negative")

    @classmethod
    def boosted_stumps(cls, rounds: int = 200, learning_rate: float = 0.1, max_depth: int = 3,
                       objective: str = SQUARED, **kw) -> "LearnerSpec":
        return cls(BOOSTED, objective, rounds=rounds, learning_rate=learning_rate, max_depth=max_depth, **kw)

    @classmethod
    def regression_forest(cls, num_trees: int = 100, min_leaf: int = 5, mtry: int | None = None,
                          honest_fraction: float | None = 0.5, objective: str = SQUARED, **kw) -> "LearnerSpec":
        return cls(FOREST, objective, num_trees=num_trees, min_leaf=min_leaf, mtry=mtry,
                   honest_fraction=honest_fraction, **kw)

    @classmethod
    def regularized_linear(cls, l2_penalty: float = 1e-6, max_iterations: int = 100, tolerance: float = 1e-8,
                           objective: str = SQUARED) -> "LearnerSpec":
        return cls(LINEAR, objective, l2_penalty=l2_penalty, max_iterations=max_iterations, tolerance=tolerance)

    def with_objective(self, objective: str) -> "LearnerSpec":
        d = asdict(self)
        d["objective"] = objective
        return LearnerSpec(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        return cls(**d)


@dataclass(frozen=True)
class TreeEnsemble:
    """Trees packed back to back; ``offsets[t]:offsets[t+1]`` is tree t."""

    binner: Binner
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    offsets: np.ndarray

    @classmethod
    def pack(cls, binner: Binner, trees: Sequence[tuple]) -> "TreeEnsemble":
        """Pack ``(feature, threshold, left, right, value, depth)`` tuples."""
        sizes = [len(t[0]) for t in trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        cols = [np.concatenate([t[k] for t in trees]) if trees else np.empty(0) for k in range(6)]
        feature, threshold, left, right, value, depth = cols
        return cls(binner, feature.astype(np.int64), threshold.astype(np.int64), left.astype(np.int64),
                   right.astype(np.int64), value.astype(np.float64), depth.astype(np.int64), offsets)

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def codes(self, features: np.ndarray) -> np.ndarray:
        return self.binner.transform(features)

    def total(self, codes: np.ndarray) -> np.ndarray:
        return _engine.forest_sum(codes, self.feature, self.threshold, self.left, self.right, self.value,
                                  self.offsets)

    def tree(self, t: int) -> dict[str, np.ndarray]:
        sl = slice(self.offsets[t], self.offsets[t + 1])
        return {k: getattr(self, k)[sl] for k in ("feature", "threshold", "left", "right", "value", "depth")}


@dataclass(frozen=True)
class FittedModel:
    spec: LearnerSpec
    n_features: int
    feature_names: tuple[str, ...] | None = None
    constant: float | None = None
    base_score: float = 0.0
    trees: TreeEnsemble | None = None
    coef: np.ndarray | None = field(default=None, repr=False)


def _check_xy(features: np.ndarray, targets: np.ndarray, spec: LearnerSpec) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-d matrix")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} feature rows but {y.shape[0]} targets")
    if y.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("features and targets must be finite")
    if spec.objective == LOGISTIC and not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic objective requires 0/1 targets")
    return x, y


def _fit_boosted(x, y, spec, seed) -> tuple[float, TreeEnsemble]:
    binner = Binner.fit(x)
    codes = binner.transform(x)
    n_bins = binner.n_bins
    n = len(y)
    if spec.objective == LOGISTIC:
        p0 = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
        base = math.log(p0 / (1 - p0))
    else:
        base = float(y.mean())
    score = np.full(n, base)
    stats = np.empty((n, 2))
    trees = []
    p = x.shape[1]
    mtry = p if spec.mtry is None else min(spec.mtry, p)
    for r in range(spec.rounds):
        if spec.objective == LOGISTIC:
            prob = expit(score)
            stats[:, 0] = prob - y
            stats[:, 1] = np.maximum(prob * (1 - prob), 1e-12)
        else:
            stats[:, 0] = score - y
            stats[:, 1] = 1.0
        rows = np.arange(n, dtype=np.int64)
        feature, threshold, left, right, parent, depth, start, end = _engine.grow_tree(
            _engine.NEWTON, codes, n_bins, rows, stats, spec.max_depth, spec.min_leaf, mtry,
            (seed * 1_000_003 + r) % (2 ** 31), REG_LAMBDA)
        value = _engine.newton_leaf_update(rows, feature, start, end, stats[:, 0], stats[:, 1],
                                           REG_LAMBDA, spec.learning_rate, score)
        trees.append((feature, threshold, left, right, value, depth))
    return base, TreeEnsemble.pack(binner, trees)


def _fit_forest(x, y, spec, seed) -> TreeEnsemble:
    binner = Binner.fit(x)
    codes = binner.transform(x)
    n_bins = binner.n_bins
    n, p = x.shape
    mtry = spec.mtry if spec.mtry is not None else max(1, math.ceil(p / 3))
    mtry = min(mtry, p)
    rng = np.random.Generator(np.random.PCG64(seed))
    stats = np.column_stack([-y, np.ones(n)])
    ystats = y[:, None].copy()
    trees = []
    n_sub = max(2, int(round(spec.sample_fraction * n)))
    for t in range(spec.num_trees):
        sub = rng.choice(n, size=n_sub, replace=False) if n_sub < n else rng.permutation(n)
        if spec.honest_fraction is None:
            struct, est = sub, sub
        else:
            k = min(max(1, int(round(spec.honest_fraction * len(sub)))), len(sub) - 1)
            struct, est = sub[:k], sub[k:]
        rows = np.sort(struct).astype(np.int64)
        tree_seed = int(rng.integers(0, 2 ** 31))
        feature, threshold, left, right, parent, depth, _, _ = _engine.grow_tree(
            _engine.NEWTON, codes, n_bins, rows, stats, -1, spec.min_leaf, mtry, tree_seed, 0.0)
        est = np.sort(est).astype(np.int64)
        leaf = _engine.apply_tree(codes[est], feature, threshold, left, right)
        value, _ = _engine.honest_node_values(_engine.NEWTON, leaf, ystats, est, parent, float(y[struct].mean()))
        trees.append((feature, threshold, left, right, value, depth))
    return TreeEnsemble.pack(binner, trees)


def _fit_linear(x, y, spec) -> np.ndarray:
    n, p = x.shape
    design = np.column_stack([np.ones(n), x])
    pen = np.full(p + 1, spec.l2_penalty)
    pen[0] = 0.0
    if spec.objective == SQUARED:
        gram = design.T @ design + np.diag(pen)
        rhs = design.T @ y
        try:
            return np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(gram, rhs, rcond=None)[0]
    beta = np.zeros(p + 1)
    p0 = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    beta[0] = math.log(p0 / (1 - p0))
    for _ in range(spec.max_iterations):
        prob = expit(design @ beta)
        w = np.maximum(prob * (1 - prob), 1e-10)
        grad = design.T @ (y - prob) - pen * beta
        hess = (design * w[:, None]).T @ design + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < spec.tolerance:
            break
    return beta


def fit(features: np.ndarray, targets: np.ndarray, spec: LearnerSpec, seed: int = 0,
        feature_names: Sequence[str] | None = None) -> FittedModel:
    """Fit ``spec`` to ``(features, targets)``; deterministic given ``seed``.

    Constant targets give a constant model and a
    :class:`DegenerateTargetWarning` instead of an error.
    """
    x, y = _check_xy(features, targets, spec)
    names = tuple(feature_names) if feature_names is not None else None
    if names is not None and len(names) != x.shape[1]:
        raise ValueError("feature_names length does not match the feature matrix")
    if np.all(y == y[0]):
        warnings.warn("constant targets; returning a constant model", DegenerateTargetWarning, stacklevel=2)
        return FittedModel(spec, x.shape[1], names, constant=float(y[0]))
    if spec.kind == BOOSTED:
        base, trees = _fit_boosted(x, y, spec, seed)
        return FittedModel(spec, x.shape[1], names, base_score=base, trees=trees)
    if spec.kind == FOREST:
        return FittedModel(spec, x.shape[1], names, trees=_fit_forest(x, y, spec, seed))
    return FittedModel(spec, x.shape[1], names, coef=_fit_linear(x, y, spec))


def predict(model: FittedModel, features: np.ndarray, feature_names: Sequence[str] | None = None) -> np.ndarray:
    """Predictions (probabilities for the logistic objective)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} feature columns, got "
                         f"{x.shape[1] if x.ndim == 2 else x.shape}")
    if feature_names is not None and model.feature_names is not None \
            and tuple(feature_names) != model.feature_names:
        raise ValueError("feature columns do not match the training feature map")
    if model.constant is not None:
        return np.full(x.shape[0], model.constant)
    spec = model.spec
    if spec.kind == LINEAR:
        raw = model.coef[0] + x @ model.coef[1:]
        return expit(raw) if spec.objective == LOGISTIC else raw
    codes = model.trees.codes(x)
    if spec.kind == BOOSTED:
        raw = model.base_score + model.trees.total(codes)
        return expit(raw) if spec.objective == LOGISTIC else raw
    return model.trees.total(codes) / model.trees.n_trees
