"""Typed tabular data, causal role binding and design-matrix encoding."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import substream

log = logging.getLogger(__name__)

CATEGORICAL = "categorical"
CONTINUOUS = "continuous"


class DataError(ValueError):
    """Malformed input data or a schema that does not fit the data."""


class StratumWarning(UserWarning):
    """A stratum was too small to contribute rows to the test split."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, CONTINUOUS):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise DataError(f"column {self.name!r}: categorical levels must be non-empty")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"column {self.name!r}: categorical levels must be unique")
        elif self.levels:
            raise DataError(f"column {self.name!r}: continuous columns take no levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.levels:
            out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSpec":
        return cls(d["name"], d["kind"], tuple(d.get("levels", ())))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Immutable column store.

    Categorical columns hold integer codes into ``ColumnSpec.levels``;
    continuous columns hold float64.  ``row_ids`` survive every subsetting
    operation so rows can be traced back to the source file.
    """

    columns: tuple[ColumnSpec, ...]
    values: dict[str, np.ndarray]
    row_ids: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        n = len(self.row_ids)
        if n < 1:
            raise DataError("dataset has no rows")
        if len(np.unique(self.row_ids)) != n:
            raise DataError("row_ids must be unique")
        for spec in self.columns:
            v = self.values[spec.name]
            if len(v) != n:
                raise DataError(f"column {spec.name!r} has {len(v)} values, expected {n}")
            if spec.is_categorical:
                if v.size and (v.min() < 0 or v.max() >= len(spec.levels)):
                    raise DataError(f"column {spec.name!r}: code outside declared levels")
            elif not np.all(np.isfinite(v)):
                raise DataError(f"column {spec.name!r}: non-finite value in continuous column")
        for v in self.values.values():
            _readonly(v)
        _readonly(self.row_ids)

    @property
    def n(self) -> int:
        return len(self.row_ids)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def spec(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"no column named {name!r}")

    def column(self, name: str) -> np.ndarray:
        self.spec(name)
        return self.values[name]

    def labels(self, name: str) -> np.ndarray:
        """Column values as text labels (categorical) or floats (continuous)."""
        spec = self.spec(name)
        v = self.values[name]
        if spec.is_categorical:
            return np.asarray(spec.levels, dtype=object)[v]
        return v

    def take(self, index: np.ndarray, renumber: bool = False) -> "Dataset":
        """Rows at ``index``; ``renumber`` assigns fresh ids 0..k-1, which
        allows repeated rows (bootstrap resamples)."""
        index = np.asarray(index)
        ids = np.arange(len(index), dtype=np.int64) if renumber else self.row_ids[index].copy()
        return Dataset(self.columns, {k: v[index].copy() for k, v in self.values.items()}, ids)

    def to_csv(self, path: str | Path, float_format: str = "{:.6f}") -> None:
        cols = [(c, self.labels(c.name)) for c in self.columns]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for i in range(self.n):
                w.writerow(
                    [vals[i] if c.is_categorical else float_format.format(vals[i]) for c, vals in cols]
                )


def _parse_float(text: str) -> float | None:
    try:
        return float(text)
    except ValueError:
        return None


def _infer_spec(name: str, cells: Sequence[str]) -> ColumnSpec:
    parsed = [_parse_float(c) for c in cells]
    numeric = all(p is not None and math.isfinite(p) for p in parsed)
    distinct = set(cells)
    # 0/1 indicator columns are categorical, so binary outcomes bind directly.
    if numeric and not distinct <= {"0", "1"}:
        return ColumnSpec(name, CONTINUOUS)
    return ColumnSpec(name, CATEGORICAL, tuple(sorted(distinct)))


def load_csv(
    path: str | Path,
    specs: Sequence[ColumnSpec] | None = None,
    missing_values: Iterable[str] = ("",),
) -> Dataset:
    """Read a headed, comma-separated UTF-8 file into a :class:`Dataset`.

    Rows containing a missing cell are dropped (the count is kept in
    ``Dataset.n_dropped``).  Without ``specs`` the column kinds are inferred;
    with ``specs`` every value is checked against its declared kind.  Errors
    name the offending line of the file.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    missing = set(missing_values)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header line") from None
        rows: list[list[str]] = []
        lines: list[int] = []
        dropped = 0
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}")
            cells = [c.strip() for c in row]
            if any(c in missing for c in cells):
                dropped += 1
                continue
            rows.append(cells)
            lines.append(lineno)
    if dropped:
        log.info("%s: dropped %d rows with missing cells", path, dropped)
    if not rows:
        raise DataError(f"{path}: no complete data rows")

    by_name = {s.name: s for s in specs} if specs is not None else {}
    if specs is not None:
        unknown = set(by_name) - set(header)
        if unknown:
            raise DataError(f"{path}: declared columns not in header: {sorted(unknown)}")

    columns: list[ColumnSpec] = []
    values: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        cells = [r[j] for r in rows]
        spec = by_name.get(name) or _infer_spec(name, cells)
        if spec.is_categorical:
            index = {lev: k for k, lev in enumerate(spec.levels)}
            codes = np.empty(len(cells), dtype=np.int64)
            for i, c in enumerate(cells):
                if c not in index:
                    raise DataError(f"{path}, line {lines[i]}: value {c!r} not a declared level of column {name!r}")
                codes[i] = index[c]
            values[name] = codes
        else:
            out = np.empty(len(cells), dtype=np.float64)
            for i, c in enumerate(cells):
                x = _parse_float(c)
                if x is None or not math.isfinite(x):
                    raise DataError(f"{path}, line {lines[i]}: non-finite value {c!r} in continuous column {name!r}")
                out[i] = x
            values[name] = out
        columns.append(spec)
    return Dataset(tuple(columns), values, np.arange(len(rows), dtype=np.int64), n_dropped=dropped)


@dataclass(frozen=True)
class RoleSchema:
    """Binding of dataset columns to causal roles.

    Exactly one of ``s1_levels`` / ``s2_levels`` is usually given; the other
    group is the complement.  ``positive_level`` names the favourable outcome
    level; leave it ``None`` for a continuous outcome column.
    """

    sensitive: str
    outcome: str
    confounders: tuple[str, ...]
    mediators: tuple[str, ...]
    s1_levels: tuple[str, ...] | None = None
    s2_levels: tuple[str, ...] | None = None
    positive_level: str | None = None
    columns: tuple[ColumnSpec, ...] | None = None

    def __post_init__(self):
        for name in ("confounders", "mediators", "s1_levels", "s2_levels", "columns"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, tuple):
                object.__setattr__(self, name, tuple(v))
        if self.s1_levels is None and self.s2_levels is None:
            raise DataError("schema needs s1_levels or s2_levels")

    @classmethod
    def from_dict(cls, d: dict) -> "RoleSchema":
        cols = d.get("columns")
        return cls(
            sensitive=d["sensitive"],
            outcome=d["outcome"],
            confounders=tuple(d.get("confounders", ())),
            mediators=tuple(d.get("mediators", ())),
            s1_levels=tuple(d["s1_levels"]) if d.get("s1_levels") is not None else None,
            s2_levels=tuple(d["s2_levels"]) if d.get("s2_levels") is not None else None,
            positive_level=d.get("positive_level"),
            columns=tuple(ColumnSpec.from_dict(c) for c in cols) if cols else None,
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RoleSchema":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such schema file: {path}")
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {
            "sensitive": self.sensitive,
            "outcome": self.outcome,
            "positive_level": self.positive_level,
            "confounders": list(self.confounders),
            "mediators": list(self.mediators),
        }
        if self.s1_levels is not None:
            out["s1_levels"] = list(self.s1_levels)
        if self.s2_levels is not None:
            out["s2_levels"] = list(self.s2_levels)
        if self.columns:
            out["columns"] = [c.to_dict() for c in self.columns]
        return out

    def resolve_groups(self, levels: Sequence[str]) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """Split the sensitive column's levels into (s1, s2)."""
        levels = tuple(levels)
        given = self.s1_levels if self.s1_levels is not None else self.s2_levels
        unknown = set(given) - set(levels)
        if unknown:
            raise DataError(f"sensitive levels not present in column {self.sensitive!r}: {sorted(unknown)}")
        if self.s1_levels is not None and self.s2_levels is not None:
            s1, s2 = tuple(self.s1_levels), tuple(self.s2_levels)
            if set(s1) & set(s2) or set(s1) | set(s2) != set(levels):
                raise DataError("s1_levels and s2_levels must partition the sensitive levels")
        elif self.s1_levels is not None:
            s1 = tuple(lv for lv in levels if lv in set(self.s1_levels))
            s2 = tuple(lv for lv in levels if lv not in set(self.s1_levels))
        else:
            s2 = tuple(lv for lv in levels if lv in set(self.s2_levels))
            s1 = tuple(lv for lv in levels if lv not in set(self.s2_levels))
        if not s1 or not s2:
            raise DataError("s1 must be a strict non-empty subset of the sensitive levels")
        return s1, s2


@dataclass(frozen=True)
class RoledDataset:
    """A dataset with its columns bound to causal roles.

    ``s`` is 1 for rows in group s2 and 0 for s1; ``y`` is 1.0 for the
    positive outcome level (or the raw value for continuous outcomes).
    """

    data: Dataset
    schema: RoleSchema
    s1: tuple[str, ...]
    s2: tuple[str, ...]
    s: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def row_ids(self) -> np.ndarray:
        return self.data.row_ids

    @property
    def confounders(self) -> tuple[str, ...]:
        return self.schema.confounders

    @property
    def mediators(self) -> tuple[str, ...]:
        return self.schema.mediators

    @property
    def binary_outcome(self) -> bool:
        return self.schema.positive_level is not None

    def group_mask(self, group: int) -> np.ndarray:
        return self.s == group

    def sensitive_labels(self) -> np.ndarray:
        return self.data.labels(self.schema.sensitive)

    def take(self, index: np.ndarray, renumber: bool = False) -> "RoledDataset":
        index = np.asarray(index)
        return RoledDataset(self.data.take(index, renumber), self.schema, self.s1, self.s2,
                            _readonly(self.s[index].copy()), _readonly(self.y[index].copy()))

    def swap_groups(self) -> "RoledDataset":
        """Same data with the roles of s1 and s2 exchanged."""
        schema = replace(self.schema, s1_levels=self.s2, s2_levels=None)
        return RoledDataset(self.data, schema, self.s2, self.s1,
                            _readonly((1 - self.s).astype(np.int8)), self.y)


def bind_roles(data: Dataset, schema: RoleSchema) -> RoledDataset:
    """Check ``schema`` against ``data`` and expose per-row group and outcome."""
    roles = [(schema.sensitive,), (schema.outcome,), schema.confounders, schema.mediators]
    seen: dict[str, int] = {}
    for k, names in enumerate(roles):
        for name in names:
            data.spec(name)
            if name in seen:
                raise DataError(f"column {name!r} assigned to more than one role")
            seen[name] = k

    sens = data.spec(schema.sensitive)
    if not sens.is_categorical:
        raise DataError(f"sensitive column {sens.name!r} must be categorical")
    s1, s2 = schema.resolve_groups(sens.levels)
    is_s2 = np.isin(np.asarray(sens.levels, dtype=object), s2)
    s = is_s2[data.values[sens.name]].astype(np.int8)
    if not s.any() or s.all():
        raise DataError("both sensitive groups must be non-empty")

    out = data.spec(schema.outcome)
    if schema.positive_level is None:
        if out.is_categorical:
            raise DataError(f"categorical outcome {out.name!r} needs a positive_level")
        y = data.values[out.name].astype(np.float64)
    else:
        if not out.is_categorical or len(out.levels) != 2:
            raise DataError(f"outcome {out.name!r} must be categorical with exactly 2 levels")
        if schema.positive_level not in out.levels:
            raise DataError(f"positive_level {schema.positive_level!r} is not a level of {out.name!r}")
        pos = out.levels.index(schema.positive_level)
        y = (data.values[out.name] == pos).astype(np.float64)
    return RoledDataset(data, schema, s1, s2, _readonly(s), _readonly(y))


@dataclass(frozen=True)
class EncodedView:
    """Numeric design matrix with a map from design columns to source columns.

    ``feature_map[j]`` is ``(source_column, level)``; ``level`` is ``None``
    for the sensitive indicator and for continuous pass-through columns.
    """

    matrix: np.ndarray
    feature_map: tuple[tuple[str, str | None], ...]
    roles: dict[str, tuple[int, ...]]

    def select(self, *role_names: str) -> np.ndarray:
        idx = self.indices(*role_names)
        return self.matrix[:, idx]

    def indices(self, *role_names: str) -> list[int]:
        return [j for r in role_names for j in self.roles[r]]

    def names(self, *role_names: str) -> list[str]:
        idx = self.indices(*role_names) if role_names else range(len(self.feature_map))
        return [self.feature_map[j][0] if self.feature_map[j][1] is None
                else f"{self.feature_map[j][0]}={self.feature_map[j][1]}" for j in idx]


def encode(data: RoledDataset, view: str = "tree") -> EncodedView:
    """One-hot encode the role columns.

    ``view="tree"`` keeps every level; ``view="linear"`` drops the first level
    of each categorical.  Continuous columns pass through unscaled.  Column
    order is: sensitive indicator, confounders, mediators.
    """
    if view not in ("tree", "linear"):
        raise ValueError(f"unknown view {view!r}")
    blocks = [data.s.astype(np.float64)[:, None]]
    fmap: list[tuple[str, str | None]] = [(data.schema.sensitive, None)]
    roles: dict[str, tuple[int, ...]] = {"sensitive": (0,)}
    j = 1
    for role in ("confounders", "mediators"):
        start = j
        for name in getattr(data, role):
            spec = data.data.spec(name)
            v = data.data.values[name]
            if spec.is_categorical:
                first = 1 if view == "linear" else 0
                lv = np.arange(first, len(spec.levels))
                blocks.append((v[:, None] == lv[None, :]).astype(np.float64))
                fmap.extend((name, spec.levels[k]) for k in lv)
                j += len(lv)
            else:
                blocks.append(v.astype(np.float64)[:, None])
                fmap.append((name, None))
                j += 1
        roles[role] = tuple(range(start, j))
    matrix = np.hstack(blocks)
    return EncodedView(_readonly(matrix), tuple(fmap), roles)


def split_stratified(
    data: RoledDataset,
    test_fraction: float,
    strata: np.ndarray,
    seed: int,
) -> tuple[RoledDataset, RoledDataset]:
    """Stratified train/test partition.

    Each stratum sends ``round(test_fraction * size)`` rows to test, chosen
    by a seeded shuffle.  Strata with fewer than two rows stay in train and
    raise a :class:`StratumWarning`.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    strata = np.asarray(strata)
    if len(strata) != data.n:
        raise ValueError("need one stratum label per row")
    rng = substream(seed, "split")
    test_mask = np.zeros(data.n, dtype=bool)
    for label in sorted(np.unique(strata).tolist()):
        rows = np.flatnonzero(strata == label)
        if len(rows) < 2:
            warnings.warn(f"stratum {label!r} has {len(rows)} row(s); kept wholly in train", StratumWarning,
                          stacklevel=2)
            continue
        k = int(math.floor(test_fraction * len(rows) + 0.5))
        k = min(max(k, 1), len(rows) - 1)
        test_mask[rng.permutation(rows)[:k]] = True
    return data.take(np.flatnonzero(~test_mask)), data.take(np.flatnonzero(test_mask))
