"""Honest causal forest for individual direct effects of the sensitive
attribute at fixed confounders and mediators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .learners import (
    LOGISTIC, SQUARED, ArmMissingError, Binner, CrossFitPlan, LearnerSpec, cross_fit_predict,
)
from .learners import _engine
from .learners.honest_tree import HonestTreeParams, causal_stats, grow_honest
from .rng import substream, subseed
from .tabular import DataError, RoledDataset, encode

IMPORTANCE_DEPTH = 4


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters.

    ``mtry=None`` means ``ceil(sqrt(p))``.  With ``local_centering`` the
    outcome and the group indicator are residualized on cross-fitted
    ``E[Y | X, M]`` and ``P(s2 | X, M)`` from ``centering_spec`` before growing.
    """

    num_trees: int = 500
    min_leaf: int = 10
    mtry: int | None = None
    honest_fraction: float = 0.5
    subsample_fraction: float = 0.5
    local_centering: bool = True
    max_depth: int = -1
    centering_spec: LearnerSpec | None = None
    centering_folds: int = 5

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be at least 1")
        if not 0.0 < self.honest_fraction < 1.0:
            raise ValueError("honest_fraction must lie in (0, 1)")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must lie in (0, 1]")
        if self.centering_folds < 2:
            raise ValueError("centering_folds must be at least 2")

    def resolved_mtry(self, p: int) -> int:
        return min(p, self.mtry if self.mtry is not None else max(1, math.ceil(math.sqrt(p))))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("num_trees", "min_leaf", "mtry", "honest_fraction",
                                           "subsample_fraction", "local_centering", "max_depth",
                                           "centering_folds")}
        d["centering_spec"] = None if self.centering_spec is None else self.centering_spec.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        d = dict(d)
        if d.get("centering_spec") is not None:
            d["centering_spec"] = LearnerSpec.from_dict(d["centering_spec"])
        return cls(**d)


@dataclass(frozen=True)
class CausalForestModel:
    """Packed honest trees plus what is needed for out-of-bag scoring."""

    params: ForestParams
    feature_names: tuple[str, ...]
    sources: tuple[str, ...]
    binner: Binner
    feature: np.ndarray = field(repr=False)
    threshold: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    right: np.ndarray = field(repr=False)
    effect: np.ndarray = field(repr=False)
    depth: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    in_bag: np.ndarray = field(repr=False)          # [tree, training row]
    train_row_ids: np.ndarray = field(repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1


@dataclass(frozen=True)
class IndividualEffects:
    row_ids: np.ndarray
    tau_hat: np.ndarray
    out_of_bag: bool

    def __post_init__(self):
        if len(self.row_ids) != len(self.tau_hat):
            raise ValueError("row_ids and tau_hat differ in length")
        if not np.all(np.isfinite(self.tau_hat)):
            raise ValueError("effects must be finite")

    def __len__(self) -> int:
        return len(self.tau_hat)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "tau_hat"])
            for rid, t in zip(self.row_ids.tolist(), self.tau_hat.tolist()):
                w.writerow([rid, f"{t:.6f}"])


@dataclass(frozen=True)
class VariableImportance:
    names: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        if np.any(self.scores < 0) or abs(self.scores.sum() - 1.0) > 1e-9:
            raise ValueError("importance scores must be non-negative and sum to 1")

    def ranking(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.names)), key=lambda j: (-self.scores[j], j))
        return [(self.names[j], float(self.scores[j])) for j in order]

    def top(self, k: int) -> list[str]:
        return [name for name, _ in self.ranking()[:k]]


def _features(data: RoledDataset):
    view = encode(data, "tree")
    idx = view.indices("confounders", "mediators")
    if not idx:
        raise DataError("the forest needs at least one confounder or mediator")
    names = tuple(view.names("confounders", "mediators"))
    sources = tuple(view.feature_map[j][0] for j in idx)
    return np.asarray(view.matrix[:, idx]), names, sources


def _centering(x: np.ndarray, w: np.ndarray, y: np.ndarray, binary_y: bool, params: ForestParams,
               seed: int) -> tuple[np.ndarray, np.ndarray]:
    base = params.centering_spec or LearnerSpec.boosted_stumps()
    plan = CrossFitPlan.make(len(y), params.centering_folds, subseed(seed, "centering", "folds"), strata=w)
    y_spec = base.with_objective(LOGISTIC if binary_y else SQUARED)
    w_spec = base.with_objective(LOGISTIC)
    y_hat = cross_fit_predict(x, y, y_spec, plan, seed=subseed(seed, "centering", "y"))
    w_hat = cross_fit_predict(x, w, w_spec, plan, seed=subseed(seed, "centering", "w"))
    return w - w_hat, y - y_hat


def fit_direct_effect_forest(data: RoledDataset, params: ForestParams = ForestParams(),
                             seed: int = 0) -> CausalForestModel:
    """Grow ``params.num_trees`` honest causal trees on row subsamples.

    Treatment is the s2 indicator and features are confounders plus
    mediators, so leaf contrasts estimate ``mu(s2, x, m) - mu(s1, x, m)``.
    """
    x, names, sources = _features(data)
    w = np.asarray(data.s, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.float64)
    n = len(y)
    if not (w.any() and (w == 0).any()):
        raise ArmMissingError("both sensitive groups must be present")
    if params.local_centering:
        w_res, y_res = _centering(x, w, y, data.binary_outcome, params, seed)
        kind, stats = causal_stats(w, y, w_res, y_res)
    else:
        kind, stats = causal_stats(w, y)
    binner = Binner.fit(x)
    codes = binner.transform(x)
    tree_params = HonestTreeParams(min_leaf=params.min_leaf, mtry=params.resolved_mtry(x.shape[1]),
                                   honest_fraction=params.honest_fraction, max_depth=params.max_depth)
    n_sub = min(n, max(2, int(round(params.subsample_fraction * n))))
    in_bag = np.zeros((params.num_trees, n), dtype=np.bool_)
    trees = []
    for t in range(params.num_trees):
        rng = substream(seed, "forest", t)
        sub = rng.choice(n, size=n_sub, replace=False) if n_sub < n else rng.permutation(n)
        in_bag[t, sub] = True
        k = min(max(1, int(round(params.honest_fraction * n_sub))), n_sub - 1)
        try:
            tree = grow_honest(kind, codes, binner.n_bins, stats, w, sub[:k], sub[k:], tree_params,
                               int(rng.integers(0, 2 ** 31)))
        except ArmMissingError as exc:
            raise ArmMissingError(f"tree {t}: {exc}") from exc
        trees.append(tree)
    sizes = [len(tr.feature) for tr in trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    cat = lambda attr: np.concatenate([getattr(tr, attr) for tr in trees])  # noqa: E731
    return CausalForestModel(params, names, sources, binner, cat("feature"), cat("threshold"), cat("left"),
                             cat("right"), cat("effect"), cat("depth"), offsets, in_bag,
                             np.asarray(data.row_ids).copy())


def predict_effects(model: CausalForestModel, data: RoledDataset) -> IndividualEffects:
    """Mean leaf effect over trees.

    If ``data`` holds exactly the training rows, each row is scored only by
    trees whose subsample excluded it (all trees if there are none).
    """
    x, names, _ = _features(data)
    if names != model.feature_names:
        raise DataError("feature columns do not match the training features")
    codes = model.binner.transform(x)
    row_ids = np.asarray(data.row_ids)
    oob = len(row_ids) == len(model.train_row_ids) and np.array_equal(row_ids, model.train_row_ids)
    exclude = model.in_bag if oob else np.zeros((model.n_trees, len(row_ids)), dtype=np.bool_)
    tau, count = _engine.forest_mean_excluding(codes, model.feature, model.threshold, model.left, model.right,
                                               model.effect, model.offsets, exclude)
    if oob and np.any(count == 0):
        full, _ = _engine.forest_mean_excluding(codes, model.feature, model.threshold, model.left,
                                                model.right, model.effect, model.offsets,
                                                np.zeros_like(exclude))
        tau = np.where(count == 0, full, tau)
    return IndividualEffects(row_ids.copy(), tau, bool(oob))


def split_counts(model: CausalForestModel, max_depth: int = IMPORTANCE_DEPTH) -> np.ndarray:
    """``counts[d - 1, f]``: splits on feature f at depth d (root is depth 1)."""
    p = len(model.feature_names)
    counts = np.zeros((max_depth, p))
    internal = (model.feature >= 0) & (model.depth < max_depth)
    np.add.at(counts, (model.depth[internal], model.feature[internal]), 1.0)
    return counts


def variable_importance(model: CausalForestModel, by_source: bool = False) -> VariableImportance:
    """Depth-weighted split frequency: depth d counts ``2^-(d-1)``, d <= 4.

    ``by_source=True`` sums one-hot columns back to their source column.
    A forest with no splits at all spreads importance evenly.
    """
    counts = split_counts(model)
    weights = 2.0 ** -np.arange(IMPORTANCE_DEPTH)
    raw = weights @ counts
    names = model.feature_names
    if by_source:
        names = tuple(dict.fromkeys(model.sources))
        pos = {name: j for j, name in enumerate(names)}
        agg = np.zeros(len(names))
        for j, src in enumerate(model.sources):
            agg[pos[src]] += raw[j]
        raw = agg
    total = raw.sum()
    scores = raw / total if total > 0 else np.full(len(raw), 1.0 / len(raw))
    return VariableImportance(tuple(names), scores)


def with_trees(params: ForestParams, num_trees: int) -> ForestParams:
    return replace(params, num_trees=num_trees)
