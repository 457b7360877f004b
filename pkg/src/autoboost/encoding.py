"""Categorical feature transforms: integer, dummy, and impact encoding.

A cardinality threshold dispatches per column: categorical features with
fewer than ``k`` levels are dummy encoded, the rest get the configured
high-cardinality strategy (integer or impact). Numeric features pass through
untouched. Impact encoding replaces a level with smoothed conditional target
aggregates: per-class frequencies for classification, the group mean for
regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Column, DataError, Dataset, SchemaError

STRATEGIES = ("integer", "impact")


@dataclass(frozen=True)
class ColumnEncoder:
    """Fitted transform for a single source column.

    ``mapping`` carries one float vector per training level: length 1 for
    integer and regression-impact encodings, K for K-class impact, L for
    dummy (a unit indicator). ``fallback`` is the vector used for levels
    never seen at fit time.
    """

    name: str
    strategy: str  # "passthrough" | "integer" | "dummy" | "impact"
    levels: tuple[str, ...]
    mapping: dict[str, tuple[float, ...]]
    fallback: tuple[float, ...]
    output_names: tuple[str, ...]

    def encode_values(self, values: np.ndarray) -> np.ndarray:
        out = np.empty((len(values), len(self.output_names)), dtype=np.float64)
        fallback = np.asarray(self.fallback)
        for i, level in enumerate(values):
            vec = self.mapping.get(level)
            out[i] = fallback if vec is None else vec
        return out


@dataclass(frozen=True)
class EncoderModel:
    """All fitted per-column transforms plus the dispatch configuration."""

    encoders: tuple[ColumnEncoder, ...]
    feature_schema: tuple[tuple[str, str], ...]
    k: int
    high_card_strategy: str
    m: float
    classes: tuple[str, ...] | None  # impact target classes, None for regression

    @property
    def output_feature_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for enc in self.encoders:
            names.extend(enc.output_names)
        return tuple(names)


def fit_encoders(
    train: Dataset, k: int = 10, high_card_strategy: str = "impact", m: float = 1.0
) -> EncoderModel:
    """Fit per-column encoders on the training split.

    Dispatch is strict: a categorical column with L < k levels is dummy
    encoded, L >= k gets ``high_card_strategy``. Impact values for level a
    and class c are (count_a(y=c) + m * P(y=c)) / (n_a + m); for regression
    (sum of y in group a + m * ybar) / (n_a + m). Unseen levels fall back to
    the global prior (impact), 0 (integer), or all-zero indicators (dummy).
    """
    if train.n_rows < 1:
        raise DataError("cannot fit encoders on an empty dataset")
    if k < 2:
        raise DataError(f"cardinality threshold k must be >= 2, got {k}")
    if high_card_strategy not in STRATEGIES:
        raise DataError(f"unknown high-cardinality strategy {high_card_strategy!r}")
    if m < 0:
        raise DataError(f"smoothing m must be >= 0, got {m}")

    needs_target = high_card_strategy == "impact" and any(
        c.kind == "categorical" and len(c.levels) >= k for c in train.feature_columns
    )
    if needs_target and train.target is None:
        raise DataError("impact encoding requires a dataset with a target")

    classes = train.classes if train.task in ("binary", "multiclass") else None
    encoders = []
    for col in train.feature_columns:
        if col.kind == "numeric":
            encoders.append(_passthrough(col))
        elif len(col.levels) < k:
            encoders.append(_fit_dummy(col))
        elif high_card_strategy == "integer":
            encoders.append(_fit_integer(col))
        else:
            encoders.append(_fit_impact(col, train, classes, m))
    return EncoderModel(
        encoders=tuple(encoders),
        feature_schema=train.feature_schema,
        k=k,
        high_card_strategy=high_card_strategy,
        m=m,
        classes=classes,
    )


def _passthrough(col: Column) -> ColumnEncoder:
    return ColumnEncoder(col.name, "passthrough", (), {}, (), (col.name,))


def _fit_integer(col: Column) -> ColumnEncoder:
    levels = col.levels
    mapping = {level: (float(i + 1),) for i, level in enumerate(levels)}
    return ColumnEncoder(col.name, "integer", levels, mapping, (0.0,), (col.name,))


def _fit_dummy(col: Column) -> ColumnEncoder:
    levels = col.levels
    size = len(levels)
    mapping = {}
    for i, level in enumerate(levels):
        vec = [0.0] * size
        vec[i] = 1.0
        mapping[level] = tuple(vec)
    names = tuple(f"{col.name}={level}" for level in levels)
    return ColumnEncoder(col.name, "dummy", levels, mapping, (0.0,) * size, names)


def _fit_impact(
    col: Column, train: Dataset, classes: tuple[str, ...] | None, m: float
) -> ColumnEncoder:
    levels = col.levels
    values = col.values
    if classes is not None:
        y = train.target_values()
        n = len(y)
        prior = np.asarray([np.sum(y == c) / n for c in classes], dtype=np.float64)
        mapping = {}
        for level in levels:
            member = values == level
            n_a = int(np.sum(member))
            counts = np.asarray([np.sum(y[member] == c) for c in classes], dtype=np.float64)
            mapping[level] = tuple((counts + m * prior) / (n_a + m))
        names = tuple(f"{col.name}~{c}" for c in classes)
        return ColumnEncoder(col.name, "impact", levels, mapping, tuple(prior), names)

    y = np.asarray(train.target_values(), dtype=np.float64)
    ybar = float(np.mean(y))
    mapping = {}
    for level in levels:
        member = values == level
        n_a = int(np.sum(member))
        mapping[level] = (float((np.sum(y[member]) + m * ybar) / (n_a + m)),)
    return ColumnEncoder(col.name, "impact", levels, mapping, (ybar,), (col.name,))


def transform(enc: EncoderModel, d: Dataset) -> Dataset:
    """Apply fitted encoders; the result has all-numeric features.

    Requires every fit-time feature to be present with the same kind; extra
    columns are ignored. The target column, when present, passes through
    untouched. Unseen levels map to each encoder's fallback.
    """
    available = {c.name: c for c in d.columns}
    for name, kind in enc.feature_schema:
        col = available.get(name)
        if col is None:
            raise SchemaError(f"missing feature column {name!r}")
        if col.kind != kind:
            raise SchemaError(f"feature {name!r} is {col.kind}, expected {kind}")

    out_columns: list[Column] = []
    for ce in enc.encoders:
        col = available[ce.name]
        if ce.strategy == "passthrough":
            out_columns.append(col)
            continue
        encoded = ce.encode_values(col.values)
        for j, out_name in enumerate(ce.output_names):
            out_columns.append(Column(out_name, "numeric", encoded[:, j]))
    if d.target is not None:
        out_columns.append(d.target_column)
    return Dataset(tuple(out_columns), d.target, d.task)
