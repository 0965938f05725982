"""Classifier audit: performance per sub-group and sensitive group, and the
s2 - s1 performance gaps, with bootstrap (or retraining) intervals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .learners import LOGISTIC, FittedModel, LearnerSpec, fit, predict
from .rng import substream
from .subgroup import SubgroupAssignment
from .tabular import DataError, RoledDataset, encode

METRICS = ("precision", "recall", "accuracy")
OVERALL = "Entire Test Set"
ALL = "all"
THRESHOLD = 0.5


@dataclass(frozen=True)
class PredictionSet:
    row_ids: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        for name in ("row_ids", "predicted", "actual"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if not (len(self.row_ids) == len(self.predicted) == len(self.actual)):
            raise ValueError("row_ids, predicted and actual differ in length")
        if len(np.unique(self.row_ids)) != len(self.row_ids):
            raise ValueError("row_ids must be unique")
        for name in ("predicted", "actual"):
            v = getattr(self, name)
            if not np.all((v == 0) | (v == 1)):
                raise ValueError(f"{name} labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.row_ids)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row_id", "predicted", "actual"])
            w.writerows(zip(self.row_ids.tolist(), self.predicted.tolist(), self.actual.tolist()))

    @classmethod
    def read_csv(cls, path: str | Path) -> "PredictionSet":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"row_id", "predicted", "actual"} - set(reader.fieldnames or ())
            if missing:
                raise DataError(f"{path}: missing columns {sorted(missing)}")
            rows = [(int(r["row_id"]), int(r["predicted"]), int(r["actual"])) for r in reader]
        if not rows:
            raise DataError(f"{path}: no predictions")
        ids, pred, act = zip(*rows)
        return cls(np.array(ids), np.array(pred), np.array(act))


@dataclass(frozen=True)
class Counts:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def of(cls, predicted: np.ndarray, actual: np.ndarray) -> "Counts":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        return cls(int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & a)), int(np.sum(~p & ~a)))

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class MetricTriple:
    """Precision, recall and accuracy; NaN marks an undefined metric."""

    precision: float
    recall: float
    accuracy: float

    @classmethod
    def from_counts(cls, c: Counts) -> "MetricTriple":
        prec = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else math.nan
        rec = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else math.nan
        acc = (c.tp + c.tn) / c.n if c.n > 0 else math.nan
        return cls(prec, rec, acc)

    def get(self, metric: str) -> float:
        return getattr(self, metric)

    def defined(self, metric: str) -> bool:
        return math.isfinite(self.get(metric))


def _metric_arrays(tp, fp, fn, tn) -> dict[str, np.ndarray]:
    """Vectorized metrics over replicate count arrays (NaN where undefined)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return {
            "precision": np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), np.nan),
            "recall": np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), np.nan),
            "accuracy": np.where(tp + fp + fn + tn > 0, (tp + tn) / np.maximum(tp + fp + fn + tn, 1), np.nan),
        }


@dataclass(frozen=True)
class Interval:
    low: float
    high: float
    std_error: float

    @classmethod
    def from_replicates(cls, reps: np.ndarray, point: float) -> "Interval":
        reps = reps[np.isfinite(reps)]
        if len(reps) < 2 or not math.isfinite(point):
            return cls(math.nan, math.nan, math.nan)
        lo, hi = np.percentile(reps, [2.5, 97.5])
        return cls(min(float(lo), point), max(float(hi), point), float(np.std(reps, ddof=1)))

    def contains(self, v: float) -> bool:
        return self.low <= v <= self.high


@dataclass(frozen=True)
class Cell:
    """Metrics for one (group, category) cell, with raw counts."""

    counts: Counts
    metrics: MetricTriple
    intervals: dict[str, Interval]

    def to_dict(self) -> dict:
        out = {"counts": self.counts.to_dict(), "n": self.counts.n}
        for m in METRICS:
            v, iv = self.metrics.get(m), self.intervals[m]
            out[m] = {"value": _num(v), "defined": math.isfinite(v), "ci_low": _num(iv.low),
                      "ci_high": _num(iv.high), "std_error": _num(iv.std_error)}
        return out


@dataclass(frozen=True)
class Gap:
    group: str
    metric: str
    value: float
    interval: Interval

    @property
    def defined(self) -> bool:
        return math.isfinite(self.value)


@dataclass(frozen=True)
class AuditReport:
    groups: tuple[str, ...]                     # OVERALL first, then sub-group labels
    categories: tuple[str, str]                 # (s1, s2) display names
    cells: dict[tuple[str, str], Cell]          # (group, ALL | category) -> cell
    gaps: dict[tuple[str, str], Gap]            # (group, metric) -> s2 - s1
    ci_mode: str
    n_replicates: int
    extra: dict = field(default_factory=dict)

    @property
    def subgroups(self) -> tuple[str, ...]:
        return self.groups[1:]

    def positive_gap_fraction(self) -> float:
        vals = [g.value for (grp, _), g in self.gaps.items() if grp != OVERALL and g.defined]
        return float(np.mean(np.asarray(vals) > 0)) if vals else math.nan

    def to_dict(self) -> dict:
        out = {"ci_mode": self.ci_mode, "n_replicates": self.n_replicates,
               "categories": {"s1": self.categories[0], "s2": self.categories[1]},
               "positive_gap_fraction": _num(self.positive_gap_fraction()), "groups": {}}
        for grp in self.groups:
            entry = {key: self.cells[(grp, key)].to_dict() for key in (ALL,) + self.categories}
            entry["gap"] = {m: {"value": _num(g.value), "defined": g.defined, "ci_low": _num(g.interval.low),
                                "ci_high": _num(g.interval.high)}
                            for m in METRICS for g in [self.gaps[(grp, m)]]}
            out["groups"][grp] = entry
        return out

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "category", "metric", "value", "defined", "ci_low", "ci_high", "std_error",
                        "tp", "fp", "fn", "tn"])
            for grp in self.groups:
                for key in (ALL,) + self.categories:
                    cell = self.cells[(grp, key)]
                    c = cell.counts
                    for m in METRICS:
                        v, iv = cell.metrics.get(m), cell.intervals[m]
                        w.writerow([grp, key, m, _num(v), int(math.isfinite(v)), _num(iv.low), _num(iv.high),
                                    _num(iv.std_error), c.tp, c.fp, c.fn, c.tn])

    def write_gap_plot_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "metric", "gap"])
            for grp in self.groups:
                for m in METRICS:
                    w.writerow([grp, m, _num(self.gaps[(grp, m)].value)])


def _num(v: float) -> str:
    return "n/a" if not math.isfinite(v) else f"{v:.6f}"


def _design(data: RoledDataset) -> tuple[np.ndarray, list[str]]:
    view = encode(data, "tree")
    return np.asarray(view.matrix), view.names()


def default_baseline_spec() -> LearnerSpec:
    """Boosted trees with the usual gradient-boosting library defaults:
    100 rounds of depth-6 trees at learning rate 0.3."""
    return LearnerSpec.boosted_stumps(rounds=100, learning_rate=0.3, max_depth=6, min_leaf=1, objective=LOGISTIC)


def train_baseline(train: RoledDataset, spec: LearnerSpec | None = None, seed: int = 0) -> FittedModel:
    """Boosted logistic classifier on the sensitive indicator, confounders and
    mediators.  A constant outcome yields a constant model with a warning."""
    if not train.binary_outcome:
        raise DataError("the audit needs a binary outcome")
    spec = (spec or default_baseline_spec()).with_objective(LOGISTIC)
    x, names = _design(train)
    return fit(x, train.y, spec, seed=seed, feature_names=names)


def predict_labels(model: FittedModel, data: RoledDataset, threshold: float = THRESHOLD) -> PredictionSet:
    x, names = _design(data)
    prob = predict(model, x, feature_names=names)
    return PredictionSet(np.asarray(data.row_ids), (prob >= threshold).astype(np.int64),
                         data.y.astype(np.int64))


def _align(preds: PredictionSet, data: RoledDataset, assignment: SubgroupAssignment):
    """Per prediction row: (predicted, actual, s, group index)."""
    data_pos = {int(r): i for i, r in enumerate(data.row_ids.tolist())}
    group_pos = {int(r): i for i, r in enumerate(assignment.row_ids.tolist())}
    try:
        di = np.array([data_pos[int(r)] for r in preds.row_ids.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"prediction row {exc.args[0]} is not in the evaluation data") from None
    try:
        gi = np.array([group_pos[int(r)] for r in preds.row_ids.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"prediction row {exc.args[0]} has no sub-group") from None
    if not np.array_equal(preds.actual, data.y[di].astype(np.int64)):
        raise DataError("actual labels in the predictions disagree with the data")
    return preds.predicted, preds.actual, np.asarray(data.s[di]), assignment.group[gi]


def _cell_masks(s, group, labels):
    """Ordered ``((group, key), mask)`` for every report cell."""
    out = []
    n = len(s)
    for g, grp in enumerate((OVERALL,) + tuple(labels)):
        base = np.ones(n, dtype=bool) if g == 0 else group == g - 1
        out.append(((grp, ALL), base))
        out.append(((grp, "s1"), base & (s == 0)))
        out.append(((grp, "s2"), base & (s == 1)))
    return out


def _bootstrap_counts(pred, act, rows, b, rng):
    m = len(rows)
    if m == 0 or b == 0:
        z = np.zeros(b)
        return z, z, z, z
    idx = rows[rng.integers(0, m, size=(b, m))]
    p = pred[idx].astype(bool)
    a = act[idx].astype(bool)
    return ((p & a).sum(1).astype(float), (p & ~a).sum(1).astype(float),
            (~p & a).sum(1).astype(float), (~p & ~a).sum(1).astype(float))


def evaluate(preds: PredictionSet, assignment: SubgroupAssignment, data: RoledDataset,
             b: int = 100, seed: int = 0) -> AuditReport:
    """Metrics per (sub-group, sensitive group) from confusion counts.

    Each cell is resampled ``b`` times within itself (its own seeded
    substream); a gap's replicate is the difference of its two cells'
    replicates, so gap intervals are percentile intervals too.
    """
    if b < 0:
        raise ValueError("b must be non-negative")
    pred, act, s, group = _align(preds, data, assignment)
    labels = assignment.spec.labels
    point: dict[tuple[str, str], Counts] = {}
    reps: dict[tuple[str, str], dict[str, np.ndarray]] = {}
    for key, mask in _cell_masks(s, group, labels):
        rows = np.flatnonzero(mask)
        point[key] = Counts.of(pred[rows], act[rows])
        rng = substream(seed, "audit", key[0], key[1])
        reps[key] = _metric_arrays(*_bootstrap_counts(pred, act, rows, b, rng))
    return _build_report(point, reps, labels, data, "bootstrap", b)


def evaluate_reruns(pred_sets: Sequence[PredictionSet], assignment: SubgroupAssignment,
                    data: RoledDataset) -> AuditReport:
    """Point metrics from the first prediction set; intervals from the spread
    of each metric across all sets (e.g. classifiers retrained with
    different seeds on the same split)."""
    if not pred_sets:
        raise ValueError("need at least one prediction set")
    runs = [_align(p, data, assignment) for p in pred_sets]
    labels = assignment.spec.labels
    point: dict[tuple[str, str], Counts] = {}
    reps: dict[tuple[str, str], dict[str, np.ndarray]] = {}
    per_run = [dict((key, Counts.of(pred[mask], act[mask])) for key, mask in _cell_masks(s, group, labels))
               for pred, act, s, group in runs]
    for key in per_run[0]:
        point[key] = per_run[0][key]
        cs = np.array([[c.tp, c.fp, c.fn, c.tn] for c in (r[key] for r in per_run)], dtype=float)
        reps[key] = _metric_arrays(cs[:, 0], cs[:, 1], cs[:, 2], cs[:, 3])
    return _build_report(point, reps, labels, data, "reruns", len(pred_sets))


def _build_report(point, reps, labels, data, mode, n_reps) -> AuditReport:
    cells = {}
    for key, counts in point.items():
        metrics = MetricTriple.from_counts(counts)
        cells[key] = Cell(counts, metrics,
                          {m: Interval.from_replicates(reps[key][m], metrics.get(m)) for m in METRICS})
    gaps = {}
    for grp in (OVERALL,) + tuple(labels):
        c1, c2 = cells[(grp, "s1")], cells[(grp, "s2")]
        for m in METRICS:
            v = c2.metrics.get(m) - c1.metrics.get(m)
            gaps[(grp, m)] = Gap(grp, m, v, Interval.from_replicates(reps[(grp, "s2")][m] - reps[(grp, "s1")][m], v))
    categories = (" | ".join(data.s1), " | ".join(data.s2))
    # cells are stored under display names so reports read naturally
    rename = {"s1": categories[0], "s2": categories[1], ALL: ALL}
    cells = {(g, rename[k]): c for (g, k), c in cells.items()}
    return AuditReport((OVERALL,) + tuple(labels), categories, cells, gaps, mode, n_reps)


def gap_analysis(report: AuditReport) -> dict:
    """Sub-group gaps sorted by magnitude, the share that favour s2, and the
    sub-group with the largest absolute gap per metric."""
    gaps = [g for (grp, _), g in report.gaps.items() if grp != OVERALL and g.defined]
    if not gaps:
        raise ValueError("no defined sub-group gap")
    ordered = sorted(gaps, key=lambda g: (-abs(g.value), report.groups.index(g.group), METRICS.index(g.metric)))
    largest = {}
    for m in METRICS:
        cand = [g for g in ordered if g.metric == m]
        if cand:
            largest[m] = {"group": cand[0].group, "gap": _num(cand[0].value)}
    return {
        "gaps": [{"group": g.group, "metric": g.metric, "gap": _num(g.value), "ci_low": _num(g.interval.low),
                  "ci_high": _num(g.interval.high)} for g in ordered],
        "positive_gap_fraction": _num(report.positive_gap_fraction()),
        "largest_gap": largest,
    }
