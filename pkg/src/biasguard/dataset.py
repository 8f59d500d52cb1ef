"""Schema-validated tabular data, file ingestion, standardization and k-fold splits.

Cells are held in a single float matrix aligned to the schema's column order.
Categorical cells store an integer code: the protected and label columns use
``1`` for the privileged / favorable category and ``0`` for the other one;
every other categorical column uses the index into its declared categories.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Schema definition is invalid or a file does not match it."""


class DataError(ValueError):
    """A data row violates the schema.

    ``row`` is the 1-based data row number (header excluded) when known.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind == CATEGORICAL:
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"column {self.name!r}: duplicate categories")
            if len(self.categories) < 2:
                raise SchemaError(f"column {self.name!r}: needs at least 2 categories")
        elif self.categories:
            raise SchemaError(f"numeric column {self.name!r} cannot declare categories")


@dataclass(frozen=True)
class Schema:
    """Column layout plus the protected-attribute and label designations."""

    columns: tuple[Column, ...]
    protected: str
    privileged: str
    label: str
    favorable: str
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})
        for role, name, value in (
            ("protected", self.protected, self.privileged),
            ("label", self.label, self.favorable),
        ):
            if name not in self._index:
                raise SchemaError(f"{role} column {name!r} is not declared")
            col = self.columns[self._index[name]]
            if col.kind != CATEGORICAL or len(col.categories) != 2:
                raise SchemaError(f"{role} column {name!r} must be categorical with exactly 2 categories")
            if value not in col.categories:
                raise SchemaError(f"{role} value {value!r} is not a category of {name!r}")
        if self.protected == self.label:
            raise SchemaError("protected and label columns must differ")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    @property
    def protected_index(self) -> int:
        return self._index[self.protected]

    @property
    def label_index(self) -> int:
        return self._index[self.label]

    @property
    def numeric_indices(self) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.columns) if c.kind == NUMERIC], dtype=np.intp)

    @property
    def categorical_indices(self) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.columns) if c.kind == CATEGORICAL], dtype=np.intp)

    @property
    def feature_indices(self) -> np.ndarray:
        """Every column a predictor may read (all but the label)."""
        return np.array([i for i in range(len(self.columns)) if i != self.label_index], dtype=np.intp)

    def n_codes(self, i: int) -> int:
        return len(self.columns[i].categories)

    def encode(self, i: int, raw: str) -> float:
        col = self.columns[i]
        if col.kind == NUMERIC:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(f"non-finite value {raw!r}")
            return value
        if raw not in col.categories:
            raise ValueError(f"undeclared category {raw!r}")
        if i == self.protected_index:
            return 1.0 if raw == self.privileged else 0.0
        if i == self.label_index:
            return 1.0 if raw == self.favorable else 0.0
        return float(col.categories.index(raw))

    def decode(self, i: int, value: float) -> str:
        col = self.columns[i]
        if col.kind == NUMERIC:
            return repr(float(value))
        if i in (self.protected_index, self.label_index):
            marked = self.privileged if i == self.protected_index else self.favorable
            other = next(c for c in col.categories if c != marked)
            return marked if value == 1.0 else other
        return col.categories[int(value)]

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry = {"name": c.name, "kind": c.kind}
            if c.kind == CATEGORICAL:
                entry["categories"] = list(c.categories)
            cols.append(entry)
        return {
            "columns": cols,
            "protected": {"column": self.protected, "privileged": self.privileged},
            "label": {"column": self.label, "favorable": self.favorable},
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Schema":
        try:
            columns = tuple(
                Column(str(c["name"]), str(c["kind"]), tuple(c.get("categories", ())))
                for c in raw["columns"]
            )
            return cls(
                columns=columns,
                protected=str(raw["protected"]["column"]),
                privileged=str(raw["protected"]["privileged"]),
                label=str(raw["label"]["column"]),
                favorable=str(raw["label"]["favorable"]),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: missing {exc}") from None


def load_schema(path: str | Path) -> Schema:
    """Read a JSON schema file (see README for the layout)."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return Schema.from_dict(raw)


def save_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of encoded rows conforming to ``schema``.

    ``row_ids`` are the 0-based positions of the rows in their source file and
    survive subsetting, so folds can be traced back to the original data.
    """

    schema: Schema
    values: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[1] != len(self.schema.columns):
            raise DataError(f"expected a 2-d array with {len(self.schema.columns)} columns")
        if values.shape[0] < 1:
            raise DataError("dataset must contain at least one row")
        row_ids = np.array(self.row_ids, dtype=np.int64, copy=True)
        if row_ids.shape != (values.shape[0],):
            raise DataError("row_ids must align with rows")
        _check_cells(self.schema, values)
        values.setflags(write=False)
        row_ids.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", row_ids)

    @classmethod
    def from_values(cls, schema: Schema, values) -> "Dataset":
        values = np.asarray(values, dtype=np.float64)
        return cls(schema, values, np.arange(values.shape[0]))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return self.values[:, self.schema.label_index].astype(np.int64)

    @property
    def protected(self) -> np.ndarray:
        return self.values[:, self.schema.protected_index].astype(np.int64)

    def take(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(self.schema, self.values[idx], self.row_ids[idx])

    def without_labels(self) -> "Dataset":
        """Copy with every label cell blanked to code 0."""
        values = self.values.copy()
        values[:, self.schema.label_index] = 0.0
        return Dataset(self.schema, values, self.row_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]


def _check_cells(schema: Schema, values: np.ndarray) -> None:
    for i, col in enumerate(schema.columns):
        cells = values[:, i]
        if col.kind == NUMERIC:
            bad = ~np.isfinite(cells)
            if bad.any():
                r = int(np.argmax(bad))
                raise DataError(f"row {r + 1}, column {col.name!r}: non-finite value", r + 1, col.name)
        else:
            bad = (cells != np.floor(cells)) | (cells < 0) | (cells >= len(col.categories))
            if bad.any():
                r = int(np.argmax(bad))
                raise DataError(f"row {r + 1}, column {col.name!r}: invalid category code", r + 1, col.name)


def load_dataset(data_path: str | Path, schema: Schema, delimiter: str = ",") -> Dataset:
    """Parse a delimited text file into a :class:`Dataset`.

    The header must name every schema column (order is free, extra columns are
    ignored). Rows keep file order. Numbers use a dot decimal separator
    regardless of locale.
    """
    path = Path(data_path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        positions = {}
        for name in schema.names:
            if name not in header:
                raise SchemaError(f"{path}: missing column {name!r}")
            positions[name] = header.index(name)
        order = [positions[name] for name in schema.names]
        rows = []
        for r, record in enumerate(reader, start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) < len(header):
                raise DataError(f"{path}: row {r} has {len(record)} fields, expected {len(header)}", r)
            encoded = []
            for i, pos in enumerate(order):
                cell = record[pos].strip()
                try:
                    encoded.append(schema.encode(i, cell))
                except ValueError as exc:
                    name = schema.columns[i].name
                    raise DataError(f"{path}: row {r}, column {name!r}: {exc}", r, name) from None
            rows.append(encoded)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(schema, np.array(rows, dtype=np.float64), np.arange(len(rows)))


def decoded_rows(d: Dataset) -> Iterable[list[str]]:
    for row in d.values:
        yield [d.schema.decode(i, v) for i, v in enumerate(row)]


def write_dataset(d: Dataset, path: str | Path, delimiter: str = ",") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(d.schema.names)
        writer.writerows(decoded_rows(d))


def kfold_split(d: Dataset, k: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    """Shuffle row indices with ``seed`` and cut them into ``k`` folds.

    Fold sizes differ by at most one. Each fold is returned once as the test
    split, paired with the union of the others as training split; both keep
    their rows in source order.
    """
    m = len(d)
    if not 2 <= k <= m:
        raise ValueError(f"fold count k={k} must satisfy 2 <= k <= {m}")
    perm = np.random.default_rng(seed).permutation(m)
    folds = [np.sort(f) for f in np.array_split(perm, k)]
    splits = []
    for i, test_idx in enumerate(folds):
        train_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        splits.append((d.take(train_idx), d.take(test_idx)))
    return splits


@dataclass(frozen=True)
class Standardizer:
    columns: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    count: int

    def transform(self, values: np.ndarray) -> np.ndarray:
        """z-scores of the numeric columns for a 2-d array of encoded rows."""
        values = np.atleast_2d(values)
        centered = values[:, self.columns] - self.means
        safe = np.where(self.stds > 0, self.stds, 1.0)
        return np.where(self.stds > 0, centered / safe, 0.0)

    def to_dict(self) -> dict:
        return {
            "columns": self.columns.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "count": self.count,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Standardizer":
        return cls(
            np.asarray(raw["columns"], dtype=np.intp),
            np.asarray(raw["means"], dtype=np.float64),
            np.asarray(raw["stds"], dtype=np.float64),
            int(raw["count"]),
        )


def fit_standardizer(d: Dataset) -> Standardizer:
    """Population mean and stddev for every numeric column of ``d``."""
    cols = d.schema.numeric_indices
    block = d.values[:, cols]
    return Standardizer(cols, block.mean(axis=0), block.std(axis=0), len(d))


def apply_standardizer(s: Standardizer, instance: np.ndarray) -> np.ndarray:
    return s.transform(np.asarray(instance, dtype=np.float64)[None, :])[0]
