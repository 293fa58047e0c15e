"""Column-typed tabular data: schemas, CSV loading, splits, and the
standardize/dequantize bridge into the continuous model space.

Tables are stored column-major: numeric columns as float64 arrays,
categorical columns as int64 code arrays with codes in [0, cardinality).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TaskKind",
    "ColumnKind",
    "TargetSpec",
    "Schema",
    "Table",
    "StandardizationStats",
    "SplitSpec",
    "TableError",
    "load_csv",
    "split_train_val",
    "compute_stats",
    "standardize",
    "destandardize",
    "dequantize",
    "requantize",
    "to_model_matrix",
    "from_model_matrix",
    "table_to_json",
    "table_from_json",
    "concat_tables",
    "apply_schema",
    "save_table_csv",
]


class TableError(ValueError):
    """Raised for malformed tables, schemas, or cell values."""


@dataclass(frozen=True)
class TaskKind:
    """Prediction task: 'regression', 'binary', or 'multiclass' (with C >= 3)."""

    kind: str
    n_classes: int = 0

    def __post_init__(self):
        if self.kind not in ("regression", "binary", "multiclass"):
            raise TableError(f"unknown task kind: {self.kind!r}")
        if self.kind == "multiclass" and self.n_classes < 3:
            raise TableError("multiclass requires n_classes >= 3")

    @classmethod
    def regression(cls) -> "TaskKind":
        return cls("regression")

    @classmethod
    def binary(cls) -> "TaskKind":
        return cls("binary", 2)

    @classmethod
    def multiclass(cls, n_classes: int) -> "TaskKind":
        return cls("multiclass", n_classes)

    @property
    def is_classification(self) -> bool:
        return self.kind != "regression"

    def to_json(self) -> dict:
        return {"kind": self.kind, "n_classes": self.n_classes}

    @classmethod
    def from_json(cls, obj: dict) -> "TaskKind":
        return cls(obj["kind"], obj.get("n_classes", 0))


@dataclass(frozen=True)
class ColumnKind:
    """Numeric column (categories is None) or categorical with named levels."""

    categories: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.categories is not None and len(self.categories) < 1:
            raise TableError("categorical column needs at least one category")
        if self.categories is not None and len(set(self.categories)) != len(self.categories):
            raise TableError("duplicate category names")

    @property
    def is_categorical(self) -> bool:
        return self.categories is not None

    @property
    def cardinality(self) -> int:
        if self.categories is None:
            raise TableError("numeric column has no cardinality")
        return len(self.categories)


NUMERIC = ColumnKind(None)


@dataclass(frozen=True)
class TargetSpec:
    index: int
    task: TaskKind


@dataclass(frozen=True)
class Schema:
    """Ordered (name, kind) columns plus an optional target designation."""

    columns: tuple[tuple[str, ColumnKind], ...]
    target: Optional[TargetSpec] = None

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise TableError("column names must be unique")
        if self.target is not None:
            if not (0 <= self.target.index < len(self.columns)):
                raise TableError("target index out of range")
        if self.n_features < 1:
            raise TableError("schema needs at least one feature column")

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def n_features(self) -> int:
        return len(self.columns) - (1 if self.target is not None else 0)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    def kind_of(self, index: int) -> ColumnKind:
        return self.columns[index][1]

    def feature_indices(self) -> list[int]:
        skip = self.target.index if self.target is not None else -1
        return [j for j in range(len(self.columns)) if j != skip]

    def feature_schema(self) -> "Schema":
        if self.target is None:
            return self
        return Schema(tuple(self.columns[j] for j in self.feature_indices()), None)

    def to_json(self) -> dict:
        cols = [
            {"name": name, "categories": list(kind.categories) if kind.is_categorical else None}
            for name, kind in self.columns
        ]
        tgt = None
        if self.target is not None:
            tgt = {"index": self.target.index, "task": self.target.task.to_json()}
        return {"columns": cols, "target": tgt}

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        cols = tuple(
            (c["name"], ColumnKind(tuple(c["categories"]) if c["categories"] is not None else None))
            for c in obj["columns"]
        )
        tgt = None
        if obj.get("target") is not None:
            tgt = TargetSpec(obj["target"]["index"], TaskKind.from_json(obj["target"]["task"]))
        return cls(cols, tgt)

    def fingerprint(self) -> str:
        import hashlib

        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class Table:
    """Column-major table; numeric cells float64, categorical cells int64 codes."""

    schema: Schema
    columns: list[np.ndarray]

    def __post_init__(self):
        if len(self.columns) != self.schema.n_columns:
            raise TableError("column count does not match schema")
        n = len(self.columns[0]) if self.columns else 0
        for j, col in enumerate(self.columns):
            if len(col) != n:
                raise TableError("ragged columns: all columns must share n_rows")
            kind = self.schema.kind_of(j)
            if kind.is_categorical:
                codes = np.asarray(col)
                if codes.size and (codes.min() < 0 or codes.max() >= kind.cardinality):
                    raise TableError(
                        f"categorical codes out of range in column {self.schema.names[j]!r}"
                    )
                self.columns[j] = codes.astype(np.int64)
            else:
                self.columns[j] = np.asarray(col, dtype=np.float64)

    @property
    def n_rows(self) -> int:
        return len(self.columns[0])

    def take(self, rows: Sequence[int] | np.ndarray) -> "Table":
        rows = np.asarray(rows)
        return Table(self.schema, [col[rows] for col in self.columns])

    def features(self) -> "Table":
        """View of the feature columns only (target dropped)."""
        if self.schema.target is None:
            return self
        idx = self.schema.feature_indices()
        return Table(self.schema.feature_schema(), [self.columns[j] for j in idx])

    def target_values(self) -> np.ndarray:
        if self.schema.target is None:
            raise TableError("table has no target column")
        col = self.columns[self.schema.target.index]
        if self.schema.target.task.is_classification:
            return col.astype(np.int64)
        return col.astype(np.float64)

    def with_target(self, name: str, task: TaskKind) -> "Table":
        """Designate `name` as the target column.

        Classification targets stored as numeric columns are converted into
        categorical codes by sorted distinct value.
        """
        try:
            idx = self.schema.names.index(name)
        except ValueError:
            raise TableError(f"no column named {name!r}") from None
        cols = list(self.columns)
        col_defs = list(self.schema.columns)
        kind = self.schema.kind_of(idx)
        if task.is_classification and not kind.is_categorical:
            values = np.unique(cols[idx])
            codes = np.searchsorted(values, cols[idx])
            col_defs[idx] = (name, ColumnKind(tuple(_format_number(v) for v in values)))
            cols[idx] = codes.astype(np.int64)
            kind = col_defs[idx][1]
        if task.is_classification and kind.cardinality != task.n_classes:
            raise TableError(
                f"target {name!r} has {kind.cardinality} levels, task expects {task.n_classes}"
            )
        schema = Schema(tuple(col_defs), TargetSpec(idx, task))
        return Table(schema, cols)


def _format_number(v: float) -> str:
    return repr(float(v))


def concat_tables(a: Table, b: Table) -> Table:
    if a.schema.columns != b.schema.columns:
        raise TableError("cannot concatenate tables with different schemas")
    return Table(a.schema, [np.concatenate([ca, cb]) for ca, cb in zip(a.columns, b.columns)])


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_numeric(cell: str) -> Optional[float]:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path: str, schema_hints: Optional[dict[str, ColumnKind]] = None) -> Table:
    """Load a UTF-8, comma-separated file with a header row.

    A column is Numeric when all of its cells parse as finite reals, else
    Categorical with codes assigned by first appearance. `schema_hints` maps
    column names to forced kinds; a hinted categorical with an explicit
    category list sends unseen values to the reserved last code.
    """
    hints = schema_hints or {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise TableError(f"{path}: empty table (header only)")
    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise TableError(f"{path}: row {r + 2} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            if cell == "":
                raise TableError(
                    f"{path}: missing value at row {r + 2}, column {header[c]!r}; "
                    "missing values are not supported"
                )

    columns: list[np.ndarray] = []
    col_defs: list[tuple[str, ColumnKind]] = []
    for c, name in enumerate(header):
        cells = [row[c] for row in rows]
        hint = hints.get(name)
        numeric_vals = None
        if hint is None or not hint.is_categorical:
            numeric_vals = [_parse_numeric(cell) for cell in cells]
            all_numeric = all(v is not None for v in numeric_vals)
            if hint is not None and not hint.is_categorical and not all_numeric:
                bad = next(cells[i] for i, v in enumerate(numeric_vals) if v is None)
                raise TableError(f"{path}: column {name!r} hinted numeric but cell {bad!r} fails to parse")
        else:
            all_numeric = False
        if (hint is None and all_numeric) or (hint is not None and not hint.is_categorical):
            columns.append(np.array(numeric_vals, dtype=np.float64))
            col_defs.append((name, NUMERIC))
            continue
        if hint is not None and hint.is_categorical and hint.categories:
            lookup = {v: i for i, v in enumerate(hint.categories)}
            reserved = hint.cardinality - 1
            codes = np.array([lookup.get(cell, reserved) for cell in cells], dtype=np.int64)
            col_defs.append((name, hint))
        else:
            lookup = {}
            codes = np.empty(len(cells), dtype=np.int64)
            for i, cell in enumerate(cells):
                if cell not in lookup:
                    lookup[cell] = len(lookup)
                codes[i] = lookup[cell]
            col_defs.append((name, ColumnKind(tuple(lookup.keys()))))
        columns.append(codes)
    return Table(Schema(tuple(col_defs), None), columns)


def apply_schema(table: Table, schema: Schema) -> Table:
    """Recode a freshly-loaded table against a previously fitted schema.

    Categorical values unseen during fitting are an error unless the fitted
    kind carries an explicit reserved last category named "<other>".
    """
    if table.schema.names != schema.names:
        raise TableError("column names differ from the fitted schema")
    cols = []
    for j, (name, kind) in enumerate(schema.columns):
        src_kind = table.schema.kind_of(j)
        col = table.columns[j]
        if not kind.is_categorical:
            if src_kind.is_categorical:
                raise TableError(f"column {name!r} expected numeric, found categories")
            cols.append(col)
            continue
        if not src_kind.is_categorical:
            raise TableError(f"column {name!r} expected categorical, found numeric")
        lookup = {v: i for i, v in enumerate(kind.categories)}
        reserved = lookup.get("<other>")
        codes = np.empty(len(col), dtype=np.int64)
        for i, code in enumerate(col):
            value = src_kind.categories[code]
            if value in lookup:
                codes[i] = lookup[value]
            elif reserved is not None:
                codes[i] = reserved
            else:
                raise TableError(f"column {name!r}: unseen category {value!r}")
        cols.append(codes)
    return Table(schema, cols)


# ---------------------------------------------------------------------------
# Train/validation split


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise TableError("train_fraction must lie in (0, 1)")


def split_train_val(table: Table, spec: SplitSpec) -> tuple[Table, Table]:
    """Disjoint row partition with train size round(f * n), deterministic per seed.

    Classification targets are stratified by class when every class has at
    least two rows; otherwise the split is plain random.
    """
    n = table.n_rows
    if n < 2:
        raise TableError("need at least 2 rows to split")
    n_train = int(round(spec.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    rng = np.random.default_rng(spec.seed)

    stratify = None
    if table.schema.target is not None and table.schema.target.task.is_classification:
        y = table.target_values()
        _, counts = np.unique(y, return_counts=True)
        if counts.min() >= 2:
            stratify = y

    if stratify is None:
        perm = rng.permutation(n)
        train_idx, val_idx = perm[:n_train], perm[n_train:]
    else:
        classes, counts = np.unique(stratify, return_counts=True)
        # largest-remainder apportionment of n_train across classes; per-class
        # takes never exceed the class count (fraction < 1), and they sum to
        # n_train exactly
        quotas = counts * (n_train / n)
        base = np.floor(quotas).astype(int)
        remainder = n_train - base.sum()
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:remainder]] += 1
        train_parts, val_parts = [], []
        for ci, cls in enumerate(classes):
            rows = np.flatnonzero(stratify == cls)
            rows = rows[rng.permutation(len(rows))]
            train_parts.append(rows[: base[ci]])
            val_parts.append(rows[base[ci]:])
        train_idx = np.sort(np.concatenate(train_parts))
        val_idx = np.sort(np.concatenate(val_parts))
    return table.take(train_idx), table.take(val_idx)


# ---------------------------------------------------------------------------
# Standardization and the dequantize/requantize bridge

_STD_CLAMP = 1e-12


@dataclass(frozen=True)
class StandardizationStats:
    """Per-column (mean, std) for numerics; categoricals flagged pass-through.

    Degenerate (constant) numeric columns store std = 1 so standardization is
    a pure shift and always invertible.
    """

    mean: np.ndarray  # (n_columns,), zeros at categorical slots
    std: np.ndarray  # (n_columns,), ones at categorical slots
    is_categorical: np.ndarray  # (n_columns,) bool

    def to_json(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "is_categorical": self.is_categorical.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StandardizationStats":
        return cls(
            np.asarray(obj["mean"], dtype=np.float64),
            np.asarray(obj["std"], dtype=np.float64),
            np.asarray(obj["is_categorical"], dtype=bool),
        )


def compute_stats(table: Table) -> StandardizationStats:
    d = table.schema.n_columns
    mean = np.zeros(d)
    std = np.ones(d)
    is_cat = np.zeros(d, dtype=bool)
    for j in range(d):
        if table.schema.kind_of(j).is_categorical:
            is_cat[j] = True
            continue
        col = table.columns[j]
        mean[j] = col.mean()
        s = col.std()  # population std
        std[j] = s if s > _STD_CLAMP else 1.0
    return StandardizationStats(mean, std, is_cat)


def standardize(table: Table) -> tuple[Table, StandardizationStats]:
    """Shift/scale numeric columns to mean 0, std 1; categoricals untouched."""
    stats = compute_stats(table)
    cols = []
    for j, col in enumerate(table.columns):
        if stats.is_categorical[j]:
            cols.append(col)
        else:
            cols.append((col - stats.mean[j]) / stats.std[j])
    return Table(table.schema, cols), stats


def destandardize(table: Table, stats: StandardizationStats) -> Table:
    cols = []
    for j, col in enumerate(table.columns):
        if stats.is_categorical[j]:
            cols.append(col)
        else:
            cols.append(col * stats.std[j] + stats.mean[j])
    return Table(table.schema, cols)


def dequantize(code: int, cardinality: int, rng: np.random.Generator) -> float:
    """code + Uniform[0, 1) noise; lands in [code, code + 1)."""
    if not (0 <= code < cardinality):
        raise TableError(f"code {code} out of range for cardinality {cardinality}")
    return float(code) + rng.random()


def requantize(value: float, cardinality: int) -> int:
    """Invert dequantization: floor, clamped into [0, cardinality)."""
    if cardinality < 1:
        raise TableError("cardinality must be >= 1")
    return int(min(max(math.floor(value), 0), cardinality - 1))


def to_model_matrix(
    table: Table,
    stats: StandardizationStats,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Map a feature table into model space: numerics standardized with the
    given stats, categoricals dequantized (code + u). With rng=None the noise
    is omitted (u = 0), which keeps the map deterministic for diagnostics.
    """
    n, d = table.n_rows, table.schema.n_columns
    M = np.empty((n, d), dtype=np.float64)
    for j, col in enumerate(table.columns):
        if stats.is_categorical[j]:
            vals = col.astype(np.float64)
            if rng is not None:
                vals = vals + rng.random(n)
            M[:, j] = vals
        else:
            M[:, j] = (col - stats.mean[j]) / stats.std[j]
    return M


def from_model_matrix(M: np.ndarray, schema: Schema, stats: StandardizationStats) -> Table:
    """Invert to_model_matrix: destandardize numerics, requantize categoricals."""
    cols = []
    for j in range(schema.n_columns):
        kind = schema.kind_of(j)
        if kind.is_categorical:
            codes = np.floor(M[:, j]).astype(np.int64)
            cols.append(np.clip(codes, 0, kind.cardinality - 1))
        else:
            cols.append(M[:, j] * stats.std[j] + stats.mean[j])
    return Table(schema, cols)


# ---------------------------------------------------------------------------
# JSON checkpoint form for pipeline intermediates


def table_to_json(table: Table) -> dict:
    return {
        "schema": table.schema.to_json(),
        "columns": [col.tolist() for col in table.columns],
    }


def table_from_json(obj: dict) -> Table:
    schema = Schema.from_json(obj["schema"])
    return Table(schema, [np.asarray(c) for c in obj["columns"]])


def save_table_csv(table: Table, path: str) -> None:
    """Write a table back to CSV; categorical codes become their names."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.schema.names)
        for r in range(table.n_rows):
            row = []
            for j, col in enumerate(table.columns):
                kind = table.schema.kind_of(j)
                if kind.is_categorical:
                    row.append(kind.categories[int(col[r])])
                else:
                    row.append(repr(float(col[r])))
            writer.writerow(row)
