"""Columnar data model for wide tabular data with a binary target.

A :class:`DataTable` owns one numpy array per column.  Numeric kinds
(binary, likelihood-level, continuous) are stored as float64 with NaN as
the missing marker; categorical columns are stored as object arrays of
strings with None as the missing marker.  Tables are immutable after
construction: every operation returns a new table (or the same object
when nothing changed), and the backing arrays are marked read-only so
they can be shared across threads.

All randomness in this module (and in the rest of the package) comes
from numpy's PCG64 generator seeded explicitly; the generator algorithm
is part of the external contract, so identical seeds reproduce identical
bytes across runs and machines.

CSV interchange: comma-delimited UTF-8 with a header row whose order
matches the schema exactly.  Empty cells and the literal token "NA" are
the missing markers.  The schema travels in a JSON sidecar listing
name/kind/levels per column plus the target column name.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CellParseError, ComputationError, ValidationError

MISSING_TOKENS = ("", "NA")

LIKELIHOOD_MIN = 1
LIKELIHOOD_MAX = 99


class ColumnKind(str, Enum):
    """Value domain of a column.

    binary        -- 0/1 indicators
    categorical   -- unordered string levels
    likelihood    -- ordinal propensity scale, integers 1..99 (1 = most likely)
    continuous    -- unrestricted reals
    """

    BINARY = "binary"
    CATEGORICAL = "categorical"
    LIKELIHOOD = "likelihood"
    CONTINUOUS = "continuous"


NUMERIC_KINDS = (ColumnKind.BINARY, ColumnKind.LIKELIHOOD, ColumnKind.CONTINUOUS)


@dataclass(frozen=True)
class ColumnSpec:
    """Name, kind, and (for categorical columns) the declared level set."""

    name: str
    kind: ColumnKind
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind is ColumnKind.CATEGORICAL:
            if self.levels is None or len(self.levels) < 2:
                raise ValidationError(
                    f"categorical column {self.name!r} needs >= 2 declared levels"
                )
            if len(set(self.levels)) != len(self.levels):
                raise ValidationError(
                    f"categorical column {self.name!r} has duplicate levels"
                )
        elif self.levels is not None:
            raise ValidationError(
                f"column {self.name!r}: levels are only valid for categorical columns"
            )


@dataclass(frozen=True)
class TableSchema:
    """Ordered column specs plus the designated binary target column."""

    columns: tuple[ColumnSpec, ...]
    target: str

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate column names in schema")
        by_name = {c.name: c for c in self.columns}
        if self.target not in by_name:
            raise ValidationError(f"target column {self.target!r} not in schema")
        if by_name[self.target].kind is not ColumnKind.BINARY:
            raise ValidationError(f"target column {self.target!r} must be binary")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise ValidationError(f"no column named {name!r} in schema")

    @property
    def predictors(self) -> list[str]:
        return [c.name for c in self.columns if c.name != self.target]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "columns": [
                {"name": c.name, "kind": c.kind.value}
                | ({"levels": list(c.levels)} if c.levels is not None else {})
                for c in self.columns
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableSchema":
        try:
            cols = tuple(
                ColumnSpec(
                    name=c["name"],
                    kind=ColumnKind(c["kind"]),
                    levels=tuple(c["levels"]) if "levels" in c else None,
                )
                for c in d["columns"]
            )
            return cls(columns=cols, target=d["target"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed schema: {exc}") from exc


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class DataTable:
    """Immutable columnar table; one array per schema column.

    The target column must exist, be binary, and contain no missing
    values.  Both target classes being present is *not* required here --
    single-class tables are legitimate sampling pools -- and is instead
    checked by the operations that need it.
    """

    def __init__(self, schema: TableSchema, columns: dict[str, np.ndarray]):
        if set(columns) != set(schema.names):
            raise ValidationError("column dict does not match schema names")
        lengths = {len(v) for v in columns.values()}
        if len(lengths) > 1:
            raise ValidationError(f"ragged columns: lengths {sorted(lengths)}")
        self.schema = schema
        self._columns = {n: _freeze(np.array(columns[n])) for n in schema.names}
        self._n = lengths.pop() if lengths else 0
        y = self._columns[schema.target]
        if np.isnan(y.astype(float)).any():
            raise ValidationError(f"target column {schema.target!r} has missing values")

    @property
    def n_records(self) -> int:
        return self._n

    def column(self, name: str) -> np.ndarray:
        if name not in self._columns:
            raise ValidationError(f"no column named {name!r}")
        return self._columns[name]

    @property
    def target_values(self) -> np.ndarray:
        """Target as an int 0/1 array."""
        return self._columns[self.schema.target].astype(int)

    def missing_mask(self, name: str) -> np.ndarray:
        spec = self.schema.column(name)
        col = self.column(name)
        if spec.kind is ColumnKind.CATEGORICAL:
            return np.array([v is None for v in col], dtype=bool)
        return np.isnan(col)

    def numeric_view(self, name: str) -> np.ndarray:
        """Column as float64 with NaN for missing.

        Binary and likelihood columns are already numeric; categorical
        columns are coded by their index in the declared level list (the
        conventional numeric recoding of character levels).
        """
        spec = self.schema.column(name)
        col = self.column(name)
        if spec.kind is ColumnKind.CATEGORICAL:
            index = {lvl: float(i) for i, lvl in enumerate(spec.levels)}
            return np.array(
                [index[v] if v is not None else np.nan for v in col], dtype=float
            )
        return col.astype(float)

    def subset(self, rows: np.ndarray) -> "DataTable":
        """New table containing the given rows (original order preserved by the caller's index order)."""
        return DataTable(
            self.schema, {n: self._columns[n][rows].copy() for n in self.schema.names}
        )

    def replace_column(self, name: str, values: np.ndarray, spec: ColumnSpec | None = None) -> "DataTable":
        """New table with one column (and optionally its spec) replaced."""
        if spec is None:
            spec = self.schema.column(name)
        if spec.name != name:
            raise ValidationError("replacement spec must keep the column name")
        cols = dict(self._columns)
        cols[name] = np.asarray(values).copy()
        new_schema = TableSchema(
            columns=tuple(spec if c.name == name else c for c in self.schema.columns),
            target=self.schema.target,
        )
        return DataTable(new_schema, cols)

    def class_counts(self) -> tuple[int, int]:
        y = self.target_values
        return int((y == 0).sum()), int((y == 1).sum())


# ---------------------------------------------------------------------------
# CSV / sidecar I/O


def _parse_cell(token: str, spec: ColumnSpec, row: int):
    if token in MISSING_TOKENS:
        return None if spec.kind is ColumnKind.CATEGORICAL else np.nan
    if spec.kind is ColumnKind.CATEGORICAL:
        if token not in spec.levels:
            raise CellParseError(row, spec.name, token, "not a declared level")
        return token
    try:
        value = float(token)
    except ValueError:
        raise CellParseError(row, spec.name, token, "not a number") from None
    if spec.kind is ColumnKind.BINARY:
        if value not in (0.0, 1.0):
            raise CellParseError(row, spec.name, token, "binary values must be 0 or 1")
    elif spec.kind is ColumnKind.LIKELIHOOD:
        if value != int(value) or not (LIKELIHOOD_MIN <= value <= LIKELIHOOD_MAX):
            raise CellParseError(
                row, spec.name, token,
                f"likelihood levels are integers in [{LIKELIHOOD_MIN}, {LIKELIHOOD_MAX}]",
            )
    return value


def load_table(csv_path: str | Path, schema: TableSchema) -> DataTable:
    """Read a CSV into a typed table, validating every cell against the schema.

    The header row must equal the schema's column names, in order.  Empty
    cells and "NA" become the missing marker.  Any cell violating its
    column kind raises :class:`CellParseError` naming the row, column,
    and offending token.
    """
    path = Path(csv_path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, no header row") from None
        if header != schema.names:
            raise ValidationError(
                f"{path}: header {header} does not match schema columns {schema.names}"
            )
        raw_rows = list(reader)

    n = len(raw_rows)
    parsed: dict[str, list] = {name: [] for name in schema.names}
    for i, row in enumerate(raw_rows):
        if len(row) != len(schema.columns):
            raise ValidationError(
                f"{path}: row {i} has {len(row)} cells, expected {len(schema.columns)}"
            )
        for spec, token in zip(schema.columns, row):
            parsed[spec.name].append(_parse_cell(token, spec, i))

    columns = {}
    for spec in schema.columns:
        if spec.kind is ColumnKind.CATEGORICAL:
            columns[spec.name] = np.array(parsed[spec.name], dtype=object)
        else:
            columns[spec.name] = np.array(parsed[spec.name], dtype=float)
    del n
    return DataTable(schema, columns)


def _format_cell(value, kind: ColumnKind) -> str:
    if kind is ColumnKind.CATEGORICAL:
        return "" if value is None else str(value)
    if math.isnan(value):
        return ""
    if kind in (ColumnKind.BINARY, ColumnKind.LIKELIHOOD):
        return str(int(value))
    return repr(float(value))


def save_table(table: DataTable, csv_path: str | Path) -> None:
    """Serialize back to CSV with identical header order; round-trips through load_table."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.schema.names)
        cols = [table.column(n) for n in table.schema.names]
        kinds = [c.kind for c in table.schema.columns]
        for i in range(table.n_records):
            writer.writerow(
                [_format_cell(col[i], kind) for col, kind in zip(cols, kinds)]
            )


def save_schema(schema: TableSchema, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema(path: str | Path) -> TableSchema:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such file: {p}")
    with open(p, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{p}: invalid JSON: {exc}") from exc
    return TableSchema.from_dict(d)


# ---------------------------------------------------------------------------
# Imputation


def impute_median(table: DataTable, column: str) -> DataTable:
    """Replace missing cells with the median of the non-missing values.

    Continuous columns use the plain median (mean of the two central
    values on even counts).  Likelihood columns round the median half-up
    so the result stays an integer in [1, 99].  Categorical and binary
    columns are rejected; their imputation is out of scope.
    """
    spec = table.schema.column(column)
    if spec.kind not in (ColumnKind.CONTINUOUS, ColumnKind.LIKELIHOOD):
        raise ValidationError(
            f"impute_median only applies to continuous or likelihood columns, "
            f"{column!r} is {spec.kind.value}"
        )
    values = table.column(column)
    mask = np.isnan(values)
    if not mask.any():
        return table
    if mask.all():
        raise ComputationError(
            f"column {column!r} has no non-missing values to impute from"
        )
    med = float(np.median(values[~mask]))
    if spec.kind is ColumnKind.LIKELIHOOD:
        med = float(np.clip(math.floor(med + 0.5), LIKELIHOOD_MIN, LIKELIHOOD_MAX))
    filled = values.copy()
    filled[mask] = med
    return table.replace_column(column, filled)


# ---------------------------------------------------------------------------
# Splitting and sampling


@dataclass(frozen=True)
class SplitResult:
    train: DataTable
    validation: DataTable
    seed: int


def _train_counts_per_class(counts: dict[int, int], frac: float) -> dict[int, int]:
    """Per-class train counts: floors of frac*n_c, topped up by largest
    fractional remainder until the overall total is round-half-up(frac*n)."""
    total = sum(counts.values())
    want = math.floor(frac * total + 0.5)
    floors = {c: math.floor(frac * n) for c, n in counts.items()}
    leftover = want - sum(floors.values())
    remainders = sorted(
        counts, key=lambda c: (-(frac * counts[c] - floors[c]), c)
    )
    out = dict(floors)
    for c in remainders[:leftover]:
        out[c] += 1
    return out


def split_train_validation(table: DataTable, frac: float, seed: int) -> SplitResult:
    """Deterministic stratified split into disjoint train/validation tables.

    Each target class contributes round-to-floor-or-ceiling of frac times
    its size (within one record of the exact fraction), and the per-class
    row choice is a seeded permutation, so the same seed always yields
    the same row assignment.
    """
    if not (0.0 < frac < 1.0):
        raise ValidationError(f"frac must be in (0, 1), got {frac}")
    if table.n_records < 2:
        raise ValidationError("need at least 2 records to split")
    y = table.target_values
    n0, n1 = table.class_counts()
    if n0 == 0 or n1 == 0:
        raise ValidationError("both target classes must be present to split")
    counts = {0: n0, 1: n1}
    k = _train_counts_per_class(counts, frac)
    rng = np.random.default_rng(seed)
    train_rows = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        perm = rng.permutation(len(idx))
        train_rows.append(idx[perm[: k[cls]]])
    train_mask = np.zeros(table.n_records, dtype=bool)
    train_mask[np.concatenate(train_rows)] = True
    train = table.subset(np.flatnonzero(train_mask))
    validation = table.subset(np.flatnonzero(~train_mask))
    return SplitResult(train=train, validation=validation, seed=seed)


def stratified_sample(
    signal_pool: DataTable,
    background_pool: DataTable,
    n_signal: int,
    n_background: int,
    seed: int,
) -> DataTable:
    """Concatenate seeded without-replacement samples from two record pools.

    Signal rows come first in the result.  Pools must share a schema.
    """
    if signal_pool.schema != background_pool.schema:
        raise ValidationError("signal and background pools must share a schema")
    if n_signal < 0 or n_background < 0:
        raise ValidationError("sample counts must be non-negative")
    if n_signal > signal_pool.n_records:
        raise ValidationError(
            f"requested {n_signal} signal records from a pool of {signal_pool.n_records}"
        )
    if n_background > background_pool.n_records:
        raise ValidationError(
            f"requested {n_background} background records from a pool of "
            f"{background_pool.n_records}"
        )
    rng = np.random.default_rng(seed)
    sig_rows = rng.permutation(signal_pool.n_records)[:n_signal]
    bkg_rows = rng.permutation(background_pool.n_records)[:n_background]
    sig = signal_pool.subset(np.sort(sig_rows))
    bkg = background_pool.subset(np.sort(bkg_rows))
    schema = signal_pool.schema
    columns = {}
    for spec in schema.columns:
        a, b = sig.column(spec.name), bkg.column(spec.name)
        columns[spec.name] = np.concatenate([a, b])
    return DataTable(schema, columns)
