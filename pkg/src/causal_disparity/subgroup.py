"""Sub-groups of individuals binned by estimated direct effect, with
descriptive and disparity summaries per sub-group and sensitive group."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .hetero_forest import IndividualEffects
from .tabular import RoledDataset


@dataclass(frozen=True)
class BinningSpec:
    """Group k (1-based) holds effects in ``[t_{k-1}, t_k)``."""

    thresholds: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if not t:
            raise ValueError("need at least one threshold")
        if not all(math.isfinite(v) for v in t):
            raise ValueError("thresholds must be finite")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly ascending")
        labels = self.labels
        if labels is None:
            labels = tuple(f"Sub-group {k + 1}" for k in range(len(t) + 1))
        labels = tuple(labels)
        if len(labels) != len(t) + 1:
            raise ValueError("need exactly one more label than thresholds")
        object.__setattr__(self, "labels", labels)

    @property
    def n_groups(self) -> int:
        return len(self.thresholds) + 1

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "BinningSpec":
        return cls(tuple(d["thresholds"]), tuple(d["labels"]) if d.get("labels") else None)


@dataclass(frozen=True)
class SubgroupAssignment:
    row_ids: np.ndarray
    group: np.ndarray            # 0-based group index per row
    spec: BinningSpec

    def sizes(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.spec.n_groups)

    def labels(self) -> np.ndarray:
        return np.asarray(self.spec.labels, dtype=object)[self.group]


def assign(effects: IndividualEffects, spec: BinningSpec) -> SubgroupAssignment:
    """Right-exclusive binning: ``t_{k-1} <= tau < t_k``."""
    tau = np.asarray(effects.tau_hat, dtype=np.float64)
    if not np.all(np.isfinite(tau)):
        raise ValueError("effects must be finite")
    group = np.searchsorted(np.asarray(spec.thresholds), tau, side="right").astype(np.int64)
    return SubgroupAssignment(np.asarray(effects.row_ids).copy(), group, spec)


@dataclass(frozen=True)
class LevelShare:
    level: str
    count: int
    percent: float


@dataclass(frozen=True)
class CellSummary:
    """One (sub-group, sensitive group) cell."""

    count: int
    majority: dict[str, LevelShare] = field(default_factory=dict)
    minority: dict[str, LevelShare] = field(default_factory=dict)
    mean: dict[str, float] = field(default_factory=dict)
    sd: dict[str, float] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass(frozen=True)
class SubgroupSummary:
    labels: tuple[str, ...]
    categories: tuple[str, str]
    cells: dict[tuple[int, int], CellSummary]
    group_tv: tuple[float, ...]
    group_size: tuple[int, ...]

    @property
    def n(self) -> int:
        return sum(self.group_size)

    def to_dict(self) -> dict:
        out = {}
        for g, label in enumerate(self.labels):
            entry = {"size": self.group_size[g], "tv": _num(self.group_tv[g]), "categories": {}}
            for c, cat in enumerate(self.categories):
                cell = self.cells[(g, c)]
                entry["categories"][cat] = {
                    "count": cell.count,
                    "empty": cell.empty,
                    "majority": {v: _share(s) for v, s in cell.majority.items()},
                    "minority": {v: _share(s) for v, s in cell.minority.items()},
                    "mean": {v: _num(x) for v, x in cell.mean.items()},
                    "sd": {v: _num(x) for v, x in cell.sd.items()},
                }
            out[label] = entry
        return out

    def flat_rows(self) -> list[tuple[str, str, str, str, str]]:
        """``(group, category, variable, statistic, value)`` rows."""
        rows = []
        for g, label in enumerate(self.labels):
            rows.append((label, "", "", "size", str(self.group_size[g])))
            rows.append((label, "", "", "tv", _num(self.group_tv[g])))
            for c, cat in enumerate(self.categories):
                cell = self.cells[(g, c)]
                rows.append((label, cat, "", "count", str(cell.count)))
                for v, s in cell.majority.items():
                    rows.append((label, cat, v, "majority", f"{s.level} ({s.percent:.1f}%)"))
                for v, s in cell.minority.items():
                    rows.append((label, cat, v, "minority", f"{s.level} ({s.percent:.1f}%)"))
                for v, x in cell.mean.items():
                    rows.append((label, cat, v, "mean", _num(x)))
                    rows.append((label, cat, v, "sd", _num(cell.sd[v])))
        return rows

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "category", "variable", "statistic", "value"])
            w.writerows(self.flat_rows())


def _num(v: float) -> str:
    return "n/a" if not math.isfinite(v) else f"{v:.6f}"


def _share(s: LevelShare) -> dict:
    return {"level": s.level, "count": s.count, "percent": round(s.percent, 6)}


def _aligned_groups(data: RoledDataset, assignment: SubgroupAssignment) -> np.ndarray:
    if len(assignment.row_ids) != data.n:
        raise ValueError("assignment does not cover the dataset")
    if np.array_equal(assignment.row_ids, data.row_ids):
        return assignment.group
    pos = {int(r): i for i, r in enumerate(assignment.row_ids.tolist())}
    try:
        return assignment.group[[pos[int(r)] for r in data.row_ids.tolist()]]
    except KeyError as exc:
        raise ValueError(f"row {exc.args[0]} has no sub-group") from None


def summarize(data: RoledDataset, assignment: SubgroupAssignment,
              variables: Sequence[str] | None = None) -> SubgroupSummary:
    """Per (sub-group, sensitive group) counts, modal/rarest observed level of
    each categorical variable and mean/sd of each continuous one, plus the
    within-sub-group TV ``mean(y | s2, g) - mean(y | s1, g)``.

    ``variables`` defaults to confounders followed by mediators.
    """
    groups = _aligned_groups(data, assignment)
    variables = tuple(variables) if variables is not None else data.confounders + data.mediators
    spec = assignment.spec
    cells: dict[tuple[int, int], CellSummary] = {}
    tvs = []
    for g in range(spec.n_groups):
        in_g = groups == g
        for c in (0, 1):
            rows = in_g & (data.s == c)
            cells[(g, c)] = _cell(data, rows, variables)
        y2, y1 = data.y[in_g & (data.s == 1)], data.y[in_g & (data.s == 0)]
        tvs.append(float(y2.mean() - y1.mean()) if len(y2) and len(y1) else math.nan)
    sizes = tuple(int(v) for v in np.bincount(groups, minlength=spec.n_groups))
    categories = (" | ".join(data.s1), " | ".join(data.s2))
    return SubgroupSummary(spec.labels, categories, cells, tuple(tvs), sizes)


def _cell(data: RoledDataset, rows: np.ndarray, variables: Sequence[str]) -> CellSummary:
    count = int(rows.sum())
    cell = CellSummary(count)
    if count == 0:
        return cell
    for name in variables:
        col = data.data.spec(name)
        v = data.data.values[name][rows]
        if col.is_categorical:
            counts = np.bincount(v, minlength=len(col.levels))
            observed = np.flatnonzero(counts)
            # ties go to the earlier level in both directions
            hi = observed[np.argmax(counts[observed])]
            lo = observed[np.argmin(counts[observed])]
            cell.majority[name] = LevelShare(col.levels[hi], int(counts[hi]), 100.0 * counts[hi] / count)
            cell.minority[name] = LevelShare(col.levels[lo], int(counts[lo]), 100.0 * counts[lo] / count)
        else:
            cell.mean[name] = float(v.mean())
            cell.sd[name] = float(v.std(ddof=1)) if count > 1 else 0.0
    return cell


@dataclass(frozen=True)
class Histogram:
    bin_left: np.ndarray
    bin_right: np.ndarray
    count: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "count"])
            for a, b, c in zip(self.bin_left.tolist(), self.bin_right.tolist(), self.count.tolist()):
                w.writerow([f"{a:.6f}", f"{b:.6f}", c])


def export_histogram(effects: IndividualEffects, bin_width: float = 0.005) -> Histogram:
    """Counts over bins of ``bin_width`` aligned to multiples of the width."""
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    tau = np.asarray(effects.tau_hat, dtype=np.float64)
    if len(tau) == 0:
        return Histogram(np.empty(0), np.empty(0), np.empty(0, dtype=np.int64))
    idx = np.floor(tau / bin_width).astype(np.int64)
    first, last = int(idx.min()), int(idx.max())
    count = np.bincount(idx - first, minlength=last - first + 1)
    k = np.arange(first, last + 1)
    return Histogram(k * bin_width, (k + 1) * bin_width, count.astype(np.int64))
