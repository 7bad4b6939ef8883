"""Tabular data: schema-declared CSV loading, leakage-free preprocessing, and
the composite-label stratified train/validation/test split.

The preprocessor learns training-set medians, min/max ranges, and category
lists, then applies median imputation, min-max scaling, and one-hot encoding
(unknown categories map to an all-zero block). Splits stratify on the
composite key z = 2*y + s so label and sensitive-group proportions survive
partitioning.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AllMissingColumn,
    EmptyFile,
    InputError,
    MissingColumn,
    SchemaMismatch,
    StratumTooSmall,
    UnparsableCell,
)
from .hashing import hash_obj

NUMERIC = "numeric"
CATEGORICAL = "categorical"
TARGET = "target"
SENSITIVE = "sensitive"
KINDS = (NUMERIC, CATEGORICAL, TARGET, SENSITIVE)

# Missing categorical values become their own category when seen in training.
MISSING_TOKEN = "__missing__"

Cell = float | str | None


@dataclass(frozen=True)
class ColumnSchema:
    """One column declaration: name, role, and (for categoricals) the
    permitted category labels in order."""

    name: str
    kind: str
    categories: tuple[str, ...] | None = None
    audited: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatch(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.categories is not None:
            if self.kind != CATEGORICAL:
                raise SchemaMismatch(f"{self.name!r}: categories only allowed on categorical columns")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaMismatch(f"{self.name!r}: duplicate category labels")
        if self.audited and self.kind != SENSITIVE:
            raise SchemaMismatch(f"{self.name!r}: only sensitive columns can be audited")


@dataclass(frozen=True)
class Schema:
    """Ordered column declarations with cross-column invariants enforced:
    exactly one target, at least one sensitive column, and exactly one
    sensitive column designated for auditing."""

    columns: tuple[ColumnSchema, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate column names in schema")
        targets = [c for c in self.columns if c.kind == TARGET]
        if len(targets) != 1:
            raise SchemaMismatch(f"schema must declare exactly one target column, got {len(targets)}")
        sensitive = [c for c in self.columns if c.kind == SENSITIVE]
        if not sensitive:
            raise SchemaMismatch("schema must declare at least one sensitive column")
        audited = [c for c in sensitive if c.audited]
        if len(sensitive) == 1 and not audited:
            # A single sensitive column is audited implicitly.
            object.__setattr__(
                self,
                "columns",
                tuple(
                    ColumnSchema(c.name, c.kind, c.categories, audited=True)
                    if c.kind == SENSITIVE
                    else c
                    for c in self.columns
                ),
            )
            audited = [c for c in self.columns if c.kind == SENSITIVE and c.audited]
        if len(audited) != 1:
            raise SchemaMismatch(
                "exactly one sensitive column must be designated audited "
                f"(got {len(audited)})"
            )

    @property
    def target(self) -> ColumnSchema:
        return next(c for c in self.columns if c.kind == TARGET)

    @property
    def audited_sensitive(self) -> ColumnSchema:
        return next(c for c in self.columns if c.kind == SENSITIVE and c.audited)

    @property
    def feature_columns(self) -> tuple[ColumnSchema, ...]:
        """Everything but the target enters the feature matrix (sensitive
        columns are model inputs, matching the audited training setup)."""
        return tuple(c for c in self.columns if c.kind != TARGET)

    def column(self, name: str) -> ColumnSchema:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaMismatch(f"no column named {name!r}")

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaMismatch(f"no column named {name!r}")

    def to_jsonable(self) -> list[dict]:
        out = []
        for c in self.columns:
            d: dict = {"name": c.name, "kind": c.kind}
            if c.categories is not None:
                d["categories"] = list(c.categories)
            if c.audited:
                d["audited"] = True
            out.append(d)
        return out

    def hash(self) -> str:
        return hash_obj(self.to_jsonable())

    @classmethod
    def from_jsonable(cls, doc) -> "Schema":
        if isinstance(doc, Mapping) and "columns" in doc:
            doc = doc["columns"]
        if not isinstance(doc, list):
            raise SchemaMismatch("schema document must be a list of column objects")
        cols = []
        for i, entry in enumerate(doc):
            if not isinstance(entry, Mapping) or "name" not in entry or "kind" not in entry:
                raise SchemaMismatch(
                    f"schema entry {i} must be an object with 'name' and 'kind'"
                )
            cats = entry.get("categories")
            cols.append(
                ColumnSchema(
                    name=entry["name"],
                    kind=entry["kind"],
                    categories=tuple(str(c) for c in cats) if cats is not None else None,
                    audited=bool(entry.get("audited", False)),
                )
            )
        return cls(tuple(cols))

    @classmethod
    def from_json_file(cls, path: str | Path) -> "Schema":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise InputError(f"schema file not found: {path}")
        except json.JSONDecodeError as e:
            raise SchemaMismatch(f"schema file {path} is not valid JSON: {e}")
        return cls.from_jsonable(doc)


@dataclass
class DataTable:
    """Raw rows plus their schema. Cells are float, category string, or None
    for missing; target and audited-sensitive cells are always 0/1."""

    schema: Schema
    rows: list[tuple[Cell, ...]]

    def __post_init__(self):
        width = len(self.schema.columns)
        t_idx = self.schema.index(self.schema.target.name)
        s_idx = self.schema.index(self.schema.audited_sensitive.name)
        for r, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaMismatch(f"row {r} has {len(row)} cells, schema has {width}")
            if row[t_idx] not in (0.0, 1.0):
                raise SchemaMismatch(f"row {r}: target must be 0 or 1, got {row[t_idx]!r}")
            if row[s_idx] not in (0.0, 1.0):
                raise SchemaMismatch(
                    f"row {r}: audited sensitive value must be 0 or 1, got {row[s_idx]!r}"
                )

    @property
    def n(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[Cell]:
        i = self.schema.index(name)
        return [row[i] for row in self.rows]

    def y(self) -> np.ndarray:
        i = self.schema.index(self.schema.target.name)
        return np.array([int(row[i]) for row in self.rows], dtype=np.int64)

    def s(self) -> np.ndarray:
        i = self.schema.index(self.schema.audited_sensitive.name)
        return np.array([int(row[i]) for row in self.rows], dtype=np.int64)

    def z(self) -> np.ndarray:
        """Composite stratification key z = 2*y + s per row."""
        return 2 * self.y() + self.s()

    def subset(self, indices: Sequence[int] | np.ndarray) -> "DataTable":
        return DataTable(self.schema, [self.rows[i] for i in indices])

    def fingerprint(self) -> str:
        return hash_obj({"schema": self.schema.to_jsonable(), "rows": [list(r) for r in self.rows]})


def _parse_cell(raw: str, col: ColumnSchema, row_idx: int) -> Cell:
    text = raw.strip()
    if text == "" or text == "?":
        if col.kind in (TARGET,) or (col.kind == SENSITIVE and col.audited):
            raise UnparsableCell(row_idx, col.name, raw, "value may not be missing")
        return None
    if col.kind == CATEGORICAL:
        return text
    try:
        value = float(text)
    except ValueError:
        raise UnparsableCell(row_idx, col.name, raw, "expected a number")
    if col.kind == TARGET or (col.kind == SENSITIVE and col.audited):
        if value not in (0.0, 1.0):
            raise UnparsableCell(row_idx, col.name, raw, "expected 0 or 1")
    return value


def load_csv(path: str | Path, schema: Schema) -> DataTable:
    """Load a comma-separated UTF-8 file with a header row into a DataTable.

    Header matching is order-insensitive; extra columns are ignored. Empty
    cells and '?' are recorded as missing, never coerced to zero.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} has no header row")
        header = [h.strip() for h in header]
        positions = []
        for col in schema.columns:
            if col.name not in header:
                raise MissingColumn(col.name)
            positions.append(header.index(col.name))
        rows: list[tuple[Cell, ...]] = []
        for r, record in enumerate(reader):
            if not record or all(cell.strip() == "" for cell in record):
                continue
            cells = []
            for col, pos in zip(schema.columns, positions):
                raw = record[pos] if pos < len(record) else ""
                cells.append(_parse_cell(raw, col, r))
            rows.append(tuple(cells))
    return DataTable(schema, rows)


def write_csv(table: DataTable, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in table.schema.columns])
        for row in table.rows:
            writer.writerow(["" if v is None else v for v in row])


# -- preprocessing -----------------------------------------------------------


@dataclass(frozen=True)
class FittedPreprocessor:
    """Frozen training-set statistics: per-numeric median/min/max and
    per-categorical category lists. Fitted from the training partition only."""

    schema_hash: str
    medians: dict[str, float]
    mins: dict[str, float]
    maxs: dict[str, float]
    categories: dict[str, tuple[str, ...]]
    feature_names: tuple[str, ...]

    def to_jsonable(self) -> dict:
        return {
            "schema_hash": self.schema_hash,
            "medians": dict(sorted(self.medians.items())),
            "mins": dict(sorted(self.mins.items())),
            "maxs": dict(sorted(self.maxs.items())),
            "categories": {k: list(v) for k, v in sorted(self.categories.items())},
            "feature_names": list(self.feature_names),
            "unknown_policy": "ignore",
        }

    def hash(self) -> str:
        return hash_obj(self.to_jsonable())

    @classmethod
    def from_jsonable(cls, doc: Mapping) -> "FittedPreprocessor":
        return cls(
            schema_hash=doc["schema_hash"],
            medians={k: float(v) for k, v in doc["medians"].items()},
            mins={k: float(v) for k, v in doc["mins"].items()},
            maxs={k: float(v) for k, v in doc["maxs"].items()},
            categories={k: tuple(v) for k, v in doc["categories"].items()},
            feature_names=tuple(doc["feature_names"]),
        )


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # (n, d) float64
    columns: tuple[str, ...]

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


def _numeric_like(col: ColumnSchema) -> bool:
    return col.kind in (NUMERIC, SENSITIVE)


def fit_preprocessor(train: DataTable) -> FittedPreprocessor:
    """Compute medians, min/max, and category lists from non-missing training
    values only. Unknown categories at transform time are ignored (all-zero
    block); a missing categorical value becomes its own category if observed
    here."""
    if train.n == 0:
        raise InputError("cannot fit a preprocessor on an empty table")
    medians: dict[str, float] = {}
    mins: dict[str, float] = {}
    maxs: dict[str, float] = {}
    categories: dict[str, tuple[str, ...]] = {}
    feature_names: list[str] = []
    for col in train.schema.feature_columns:
        values = train.column(col.name)
        if _numeric_like(col):
            present = np.array([v for v in values if v is not None], dtype=np.float64)
            if present.size == 0:
                raise AllMissingColumn(col.name)
            medians[col.name] = float(np.median(present))
            mins[col.name] = float(present.min())
            maxs[col.name] = float(present.max())
            feature_names.append(col.name)
        else:
            if col.categories is not None:
                cats = list(col.categories)
            else:
                cats = sorted({str(v) for v in values if v is not None})
            if any(v is None for v in values) and MISSING_TOKEN not in cats:
                cats.append(MISSING_TOKEN)
            categories[col.name] = tuple(cats)
            feature_names.extend(f"{col.name}={c}" for c in cats)
    return FittedPreprocessor(
        schema_hash=train.schema.hash(),
        medians=medians,
        mins=mins,
        maxs=maxs,
        categories=categories,
        feature_names=tuple(feature_names),
    )


def transform(prep: FittedPreprocessor, table: DataTable) -> FeatureMatrix:
    """Impute missing numerics with the training median, min-max scale (a
    degenerate min==max feature maps to 0.0), and one-hot encode categoricals
    with unknown categories ignored."""
    if table.schema.hash() != prep.schema_hash:
        raise SchemaMismatch("table schema does not match the fitted preprocessor")
    n = table.n
    out = np.zeros((n, len(prep.feature_names)), dtype=np.float64)
    j = 0
    for col in table.schema.feature_columns:
        values = table.column(col.name)
        if _numeric_like(col):
            med = prep.medians[col.name]
            lo = prep.mins[col.name]
            hi = prep.maxs[col.name]
            raw = np.array([med if v is None else v for v in values], dtype=np.float64)
            if hi > lo:
                out[:, j] = (raw - lo) / (hi - lo)
            else:
                out[:, j] = 0.0
            j += 1
        else:
            cats = prep.categories[col.name]
            index = {c: k for k, c in enumerate(cats)}
            for r, v in enumerate(values):
                token = MISSING_TOKEN if v is None else str(v)
                k = index.get(token)
                if k is not None:
                    out[r, j + k] = 1.0
            j += len(cats)
    return FeatureMatrix(out, prep.feature_names)


# -- stratified splitting ----------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    fractions: tuple[float, float, float] = (0.60, 0.20, 0.20)
    seed: int = 42

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise InputError("split fractions must sum to 1")
        if any(f <= 0 for f in self.fractions):
            raise InputError("split fractions must be positive")


def largest_remainder_counts(n: int, fractions: Sequence[float]) -> list[int]:
    """Allocate n items to fractions, within one item of exact proportion."""
    exact = [f * n for f in fractions]
    base = [int(np.floor(e)) for e in exact]
    leftover = n - sum(base)
    remainders = sorted(
        range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i)
    )
    for i in remainders[:leftover]:
        base[i] += 1
    return base


def stratified_split_indices(
    table: DataTable, plan: SplitPlan | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic per-stratum shuffle then contiguous slicing with
    largest-remainder rounding. Returns (train, validation, test) row
    indices."""
    plan = plan or SplitPlan()
    if table.n < 10:
        raise InputError(f"need at least 10 rows to split, got {table.n}")
    z = table.z()
    parts: list[list[np.ndarray]] = [[], [], []]
    for stratum in sorted(set(int(v) for v in z)):
        idx = np.flatnonzero(z == stratum)
        if idx.size < 3:
            raise StratumTooSmall(stratum, int(idx.size))
        rng = np.random.default_rng([plan.seed, stratum])
        perm = idx[rng.permutation(idx.size)]
        counts = largest_remainder_counts(idx.size, plan.fractions)
        parts[0].append(perm[: counts[0]])
        parts[1].append(perm[counts[0] : counts[0] + counts[1]])
        parts[2].append(perm[counts[0] + counts[1] :])
    return tuple(np.concatenate(p) if p else np.array([], dtype=np.int64) for p in parts)


def stratified_split(
    table: DataTable, plan: SplitPlan | None = None
) -> tuple[DataTable, DataTable, DataTable]:
    tr, va, te = stratified_split_indices(table, plan)
    return table.subset(tr), table.subset(va), table.subset(te)


def split_fingerprint(table: DataTable, plan: SplitPlan, prep: FittedPreprocessor) -> str:
    """Dataset fingerprint: hash of the split assignment plus the fitted
    preprocessor, used to tie audit reports to the exact data they saw."""
    tr, va, te = stratified_split_indices(table, plan)
    return hash_obj(
        {
            "train": tr.tolist(),
            "validation": va.tolist(),
            "test": te.tolist(),
            "seed": plan.seed,
            "preprocessor": prep.to_jsonable(),
        }
    )
