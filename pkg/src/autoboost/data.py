"""Tabular dataset container, CSV ingestion, holdout splitting, majority baseline.

Raw data is kept as-is: no scaling, numeric missing values stay NaN (the
booster routes them through learned default directions), and missing
categorical cells become the explicit level ``__NA__`` so the encoders have a
concrete level to map.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TASKS = ("binary", "multiclass", "regression")

NA_LEVEL = "__NA__"
DEFAULT_NA_TOKENS = ("", "NA", "?")


class DataError(ValueError):
    """A dataset, file, or split request violates the data contracts."""


class SchemaError(DataError):
    """Column names or kinds do not match the expected schema."""


def _parse_number(cell: str) -> float | None:
    """Return the finite float value of ``cell``, or None if it is not one."""
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


@dataclass(frozen=True)
class Column:
    """One named column.

    Numeric columns hold float64 with NaN for missing cells; categorical
    columns hold string levels (missing cells are the ``__NA__`` level).
    """

    name: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise DataError(f"unknown column kind: {self.kind!r}")
        if self.kind == "numeric":
            object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        else:
            object.__setattr__(
                self, "values", np.asarray([str(v) for v in self.values], dtype=object)
            )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def levels(self) -> tuple[str, ...]:
        """Distinct levels, sorted lexicographically (categorical only).

        First-appearance order in the source file is deliberately not exposed;
        every iteration over levels is file-order insensitive.
        """
        if self.kind != "categorical":
            raise DataError(f"column {self.name!r} is numeric, has no levels")
        return tuple(sorted(set(self.values.tolist())))

    def take(self, rows: np.ndarray) -> "Column":
        return Column(self.name, self.kind, self.values[rows])


@dataclass(frozen=True)
class Dataset:
    """Immutable tabular dataset.

    ``target`` may be None for prediction-time data that carries features
    only; in that case ``task`` must be None as well.
    """

    columns: tuple[Column, ...]
    target: str | None
    task: str | None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise DataError("columns have unequal lengths")
        if self.target is None:
            if self.task is not None:
                raise DataError("task given without a target column")
            return
        if self.task not in TASKS:
            raise DataError(f"unknown task: {self.task!r}")
        tcol = self._column(self.target)
        if tcol.kind == "numeric":
            if np.isnan(tcol.values).any():
                raise DataError("target column has missing values")
            if self.task != "regression":
                raise DataError(f"task {self.task!r} requires a categorical target")
        else:
            if self.task == "regression":
                raise DataError("regression requires a numeric target")
            # Subsets of a classification dataset may observe fewer levels
            # than the task implies (e.g. a one-class test split); only more
            # levels than the task allows is a hard error. Full-strength
            # level-count checks happen at load time.
            n_levels = len(tcol.levels)
            if self.task == "binary" and n_levels > 2:
                raise DataError(f"binary target must have 2 levels, found {n_levels}")

    def _column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"no column named {name!r}")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.name != self.target)

    @property
    def target_column(self) -> Column:
        if self.target is None:
            raise DataError("dataset has no target column")
        return self._column(self.target)

    @property
    def classes(self) -> tuple[str, ...]:
        """Sorted target levels for classification tasks."""
        if self.task not in ("binary", "multiclass"):
            raise DataError("classes are defined for classification tasks only")
        return self.target_column.levels

    @property
    def feature_schema(self) -> tuple[tuple[str, str], ...]:
        return tuple((c.name, c.kind) for c in self.feature_columns)

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(tuple(c.take(rows) for c in self.columns), self.target, self.task)

    def feature_matrix(self) -> np.ndarray:
        """Stack all-numeric features into an (n_rows, n_features) float matrix."""
        for c in self.feature_columns:
            if c.kind != "numeric":
                raise DataError(f"feature {c.name!r} is categorical, not numeric")
        if not self.feature_columns:
            return np.empty((self.n_rows, 0), dtype=np.float64)
        return np.column_stack([c.values for c in self.feature_columns])

    def target_values(self) -> np.ndarray:
        return self.target_column.values

    def class_indices(self) -> np.ndarray:
        """Target labels as integer indices into the sorted class list."""
        classes = self.classes
        lookup = {label: i for i, label in enumerate(classes)}
        return np.asarray([lookup[v] for v in self.target_values()], dtype=np.intp)


@dataclass(frozen=True)
class SplitPair:
    """Row-disjoint train/validation split of one dataset."""

    train: Dataset
    valid: Dataset
    seed: int


def load_csv(
    path: str | Path,
    target: str | None,
    task_hint: str | None = None,
    na_tokens: tuple[str, ...] = DEFAULT_NA_TOKENS,
) -> Dataset:
    """Load an RFC-4180 CSV file (header row mandatory, UTF-8) into a Dataset.

    Columns whose non-missing cells all parse as finite numbers become
    numeric; everything else is categorical. Cells matching ``na_tokens``
    become missing. The task is inferred from the target when no hint is
    given: numeric target means regression, otherwise 2 levels means binary
    and 3 or more means multiclass. ``target=None`` loads a feature-only
    dataset for prediction.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if task_hint is not None and task_hint not in TASKS:
        raise DataError(f"unknown task hint: {task_hint!r}")
    na_set = set(na_tokens)

    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = list(reader)

    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    if target is not None and target not in header:
        raise DataError(f"{path}: target column {target!r} not in header")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")

    columns = []
    task = task_hint
    for j, name in enumerate(header):
        cells = [row[j] for row in rows]
        if name == target:
            tcol = _build_target_column(name, cells, na_set, task_hint)
            columns.append(tcol)
            if task is None and tcol.kind == "numeric":
                task = "regression"
            elif tcol.kind == "categorical":
                n_levels = len(tcol.levels)
                if task is None:
                    task = "binary" if n_levels == 2 else "multiclass"
                elif task == "binary" and n_levels != 2:
                    raise DataError(f"binary target must have 2 levels, found {n_levels}")
                elif task == "multiclass" and n_levels < 3:
                    raise DataError(f"multiclass target must have >=3 levels, found {n_levels}")
        else:
            columns.append(_build_feature_column(name, cells, na_set))

    return Dataset(tuple(columns), target, task if target is not None else None)


def _build_feature_column(name: str, cells: list[str], na_set: set[str]) -> Column:
    present = [c for c in cells if c not in na_set]
    numeric = len(present) == len([c for c in present if _parse_number(c) is not None])
    if numeric:
        values = np.asarray(
            [np.nan if c in na_set else float(c) for c in cells], dtype=np.float64
        )
        return Column(name, "numeric", values)
    values = np.asarray([NA_LEVEL if c in na_set else c for c in cells], dtype=object)
    return Column(name, "categorical", values)


def _build_target_column(
    name: str, cells: list[str], na_set: set[str], task_hint: str | None
) -> Column:
    if any(c in na_set for c in cells):
        raise DataError(f"target column {name!r} has missing cells")
    parsed = [_parse_number(c) for c in cells]
    all_numeric = all(v is not None for v in parsed)
    if task_hint == "regression" or (task_hint is None and all_numeric):
        if not all_numeric:
            raise DataError(f"target column {name!r} is not numeric, cannot regress")
        return Column(name, "numeric", np.asarray(parsed, dtype=np.float64))
    # Classification targets keep their literal string labels, numeric-looking or not.
    distinct = len(set(cells))
    if task_hint is None and distinct < 2:
        raise DataError(f"target column {name!r} has a single level")
    return Column(name, "categorical", np.asarray(cells, dtype=object))


def split_holdout(
    d: Dataset, valid_fraction: float, seed: int, stratify: bool = False
) -> SplitPair:
    """Split off a validation holdout of round(valid_fraction * n_rows) rows.

    Stratified splits allocate per-class validation counts by largest
    remainder, which keeps class proportions within one row of exact. The
    split is a pure function of (d, valid_fraction, seed, stratify).
    """
    if not (0.0 < valid_fraction < 1.0):
        raise DataError(f"valid_fraction must be in (0,1), got {valid_fraction}")
    n = d.n_rows
    if n < 5:
        raise DataError(f"need at least 5 rows to split, got {n}")
    n_valid = int(math.floor(valid_fraction * n + 0.5))
    rng = np.random.default_rng(seed)

    if stratify:
        if d.task not in ("binary", "multiclass"):
            raise DataError("stratified splitting requires a classification task")
        y = d.target_values()
        classes = d.classes
        counts = {c: int(np.sum(y == c)) for c in classes}
        thin = [c for c in classes if counts[c] < 2]
        if thin:
            raise DataError(f"class {thin[0]!r} has fewer than 2 rows, cannot stratify")
        quotas = {c: n_valid * counts[c] / n for c in classes}
        alloc = {c: int(math.floor(quotas[c])) for c in classes}
        shortfall = n_valid - sum(alloc.values())
        by_remainder = sorted(classes, key=lambda c: (-(quotas[c] - alloc[c]), c))
        for c in by_remainder[:shortfall]:
            alloc[c] += 1
        valid_idx = []
        for c in classes:
            members = np.flatnonzero(y == c)
            if alloc[c] > 0:
                valid_idx.append(rng.choice(members, size=alloc[c], replace=False))
        valid_rows = np.sort(np.concatenate(valid_idx)) if valid_idx else np.empty(0, np.intp)
    else:
        valid_rows = np.sort(rng.choice(n, size=n_valid, replace=False))

    mask = np.zeros(n, dtype=bool)
    mask[valid_rows] = True
    train_rows = np.flatnonzero(~mask)
    return SplitPair(d.subset(train_rows), d.subset(valid_rows), seed)


def majority_baseline(train: Dataset, test: Dataset) -> float:
    """Misclassification rate of always predicting the most frequent train class.

    Ties between equally frequent classes break to the lexicographically
    smallest label, so the baseline is deterministic.
    """
    if train.task not in ("binary", "multiclass"):
        raise DataError("majority baseline is defined for classification tasks only")
    y_train = train.target_values()
    labels, counts = np.unique(y_train.astype(str), return_counts=True)
    predicted = labels[int(np.argmax(counts))]
    y_test = test.target_values().astype(str)
    return float(np.mean(y_test != predicted))
