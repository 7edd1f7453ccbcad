"""Column-typed tables: ingestion, validation, summaries, splits, resampling.

A :class:`Table` is the universal currency of the pipeline: an immutable,
schema-conforming collection of columns.  Continuous columns are float64
arrays that are guaranteed finite after ingestion; discrete columns hold
category values (ints or strings) with an explicit learned category set.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptyInput,
    InsufficientClassRows,
    InsufficientData,
    ParseError,
    SchemaMismatch,
)
from .rng import spawn

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True)
class Column:
    """One named column: ``kind`` is ``"continuous"`` or ``"discrete"``.

    For discrete columns, ``categories`` optionally pins the allowed
    category set; when ``None`` the set is learned from the data.
    """

    name: str
    kind: str
    unit: str = ""
    categories: tuple | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise SchemaMismatch(f"unknown column kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class Schema:
    """Ordered column declarations plus the target and optional group column."""

    columns: tuple[Column, ...]
    target_column: str
    group_column: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaMismatch(f"duplicate column names: {dupes}")
        if self.target_column not in names:
            raise SchemaMismatch(f"target column {self.target_column!r} not in schema")
        if self.group_column is not None and self.group_column not in names:
            raise SchemaMismatch(f"group column {self.group_column!r} not in schema")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaMismatch(f"no column named {name!r}")

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaMismatch(f"no column named {name!r}")

    @property
    def feature_columns(self) -> list[Column]:
        """All columns except the target and the group id."""
        skip = {self.target_column, self.group_column}
        return [c for c in self.columns if c.name not in skip]

    @property
    def continuous_features(self) -> list[str]:
        return [c.name for c in self.feature_columns if c.kind == CONTINUOUS]

    @property
    def discrete_columns(self) -> list[str]:
        """Discrete columns that participate in modeling (group id excluded)."""
        return [
            c.name
            for c in self.columns
            if c.kind == DISCRETE and c.name != self.group_column
        ]


class Table:
    """Immutable rows x named-columns data with per-column kinds.

    ``data`` maps column name -> numpy array (float64 for continuous,
    object/int for discrete).  Discrete columns carry a ``categories``
    tuple (sorted learned set, unless pinned by the schema).
    """

    def __init__(self, schema: Schema, data: dict[str, np.ndarray],
                 categories: dict[str, tuple] | None = None):
        self.schema = schema
        lengths = {len(v) for v in data.values()}
        if set(data) != set(schema.names):
            missing = sorted(set(schema.names) - set(data))
            extra = sorted(set(data) - set(schema.names))
            raise SchemaMismatch(f"column mismatch: missing={missing} extra={extra}")
        if len(lengths) > 1:
            raise SchemaMismatch(f"ragged columns: lengths {sorted(lengths)}")
        self.n_rows = lengths.pop() if lengths else 0
        self._data = {}
        self.categories: dict[str, tuple] = {}
        for col in schema.columns:
            values = np.asarray(data[col.name])
            if col.kind == CONTINUOUS:
                values = values.astype(np.float64)
                if values.size and not np.all(np.isfinite(values)):
                    bad = int(np.flatnonzero(~np.isfinite(values))[0])
                    raise ParseError(bad, col.name, "non-finite value")
            else:
                cats = col.categories
                if cats is None and categories is not None:
                    cats = categories.get(col.name)
                if cats is None:
                    cats = tuple(sorted(set(values.tolist()), key=_category_key))
                else:
                    cats = tuple(cats)
                    known = set(cats)
                    for i, v in enumerate(values.tolist()):
                        if v not in known:
                            raise ParseError(i, col.name, f"unknown category {v!r}")
                self.categories[col.name] = cats
            values.setflags(write=False)
            self._data[col.name] = values

    # -- access ---------------------------------------------------------

    def column(self, name: str) -> np.ndarray:
        if name not in self._data:
            raise SchemaMismatch(f"no column named {name!r}")
        return self._data[name]

    def labels(self) -> np.ndarray:
        """Target column values."""
        return self.column(self.schema.target_column)

    def groups(self) -> np.ndarray:
        if self.schema.group_column is None:
            raise SchemaMismatch("schema declares no group column")
        return self.column(self.schema.group_column)

    def feature_matrix(self, features: list[str] | None = None) -> np.ndarray:
        """Stack continuous feature columns into an (n, d) float64 matrix."""
        names = features if features is not None else self.schema.continuous_features
        cont = set(self.schema.continuous_features)
        for n in names:
            if n not in cont:
                raise SchemaMismatch(f"{n!r} is not a continuous feature column")
        if not names:
            return np.empty((self.n_rows, 0))
        return np.column_stack([self.column(n) for n in names])

    def select_rows(self, indices) -> "Table":
        idx = np.asarray(indices, dtype=np.intp)
        data = {name: arr[idx] for name, arr in self._data.items()}
        return Table(self.schema, data, categories=dict(self.categories))

    def drop_group(self) -> "Table":
        """The modeling view: same table without the group-id column."""
        if self.schema.group_column is None:
            return self
        keep = [c for c in self.schema.columns if c.name != self.schema.group_column]
        schema = Schema(tuple(keep), target_column=self.schema.target_column)
        data = {c.name: self._data[c.name] for c in keep}
        cats = {k: v for k, v in self.categories.items() if k != self.schema.group_column}
        return Table(schema, data, categories=cats)

    def class_indices(self, category) -> np.ndarray:
        y = self.labels()
        return np.flatnonzero(np.asarray([v == category for v in y.tolist()]))

    # -- summaries ------------------------------------------------------

    def summary(self) -> "SummaryStats":
        return SummaryStats.from_table(self)

    # -- serialization --------------------------------------------------

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_string())

    def to_csv_string(self) -> str:
        """Canonical CSV: snake_case headers, row order preserved.

        Floats are written with ``repr`` so a load -> serialize -> load
        round trip reproduces identical cell values.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.schema.names)
        kinds = {c.name: c.kind for c in self.schema.columns}
        cols = [self._data[n] for n in self.schema.names]
        for i in range(self.n_rows):
            row = []
            for name, arr in zip(self.schema.names, cols):
                v = arr[i]
                row.append(repr(float(v)) if kinds[name] == CONTINUOUS else str(v))
            writer.writerow(row)
        return buf.getvalue()


def _category_key(v):
    # Sort ints before strings so mixed learned sets still order deterministically.
    return (0, v, "") if isinstance(v, (int, np.integer)) else (1, 0, str(v))


@dataclass
class SummaryStats:
    """Per-column summary: count/mean/std/min/max, category frequencies.

    Uses sample standard deviation (ddof=1), matching common ML tooling;
    a single row yields std 0.
    """

    n_rows: int
    continuous: dict[str, dict[str, float]] = field(default_factory=dict)
    discrete: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_table(cls, table: Table) -> "SummaryStats":
        stats = cls(n_rows=table.n_rows)
        for col in table.schema.columns:
            values = table.column(col.name)
            if col.kind == CONTINUOUS:
                std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
                stats.continuous[col.name] = {
                    "count": int(len(values)),
                    "mean": float(np.mean(values)),
                    "std": std,
                    "min": float(np.min(values)),
                    "max": float(np.max(values)),
                }
            else:
                freqs = {}
                for cat in table.categories[col.name]:
                    freqs[cat] = int(sum(1 for v in values.tolist() if v == cat))
                stats.discrete[col.name] = freqs
        return stats


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_csv(path: str | os.PathLike, schema: Schema,
             aliases: dict[str, str] | None = None) -> Table:
    """Load a comma-separated file into a schema-conforming :class:`Table`.

    The header row is required.  Header names are first mapped through
    ``aliases`` (e.g. the UCI ``"MDVP:Fo(Hz)"`` style), then matched against
    the schema's canonical names.  Row order is preserved.

    Raises:
        EmptyInput: the file has no header or no data rows.
        SchemaMismatch: a schema column is missing or an unknown column appears.
        ParseError: a continuous cell is non-numeric/non-finite, or a discrete
            cell is outside the column's category set.
    """
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyInput(f"{path}: no header row")
    header, data_rows = rows[0], rows[1:]
    if not data_rows:
        raise EmptyInput(f"{path}: no data rows")

    aliases = aliases or {}
    mapped = [aliases.get(h.strip(), h.strip()) for h in header]
    missing = [n for n in schema.names if n not in mapped]
    unknown = [h for h in mapped if h not in schema.names]
    if missing or unknown:
        raise SchemaMismatch(
            f"{path}: missing columns {missing}, unknown columns {unknown}"
        )
    position = {name: mapped.index(name) for name in schema.names}

    columns: dict[str, list] = {name: [] for name in schema.names}
    for i, raw in enumerate(data_rows):
        if len(raw) != len(header):
            raise ParseError(i, "<row>", f"expected {len(header)} cells, got {len(raw)}")
        for col in schema.columns:
            cell = raw[position[col.name]].strip()
            if col.kind == CONTINUOUS:
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(i, col.name, f"non-numeric {cell!r}") from None
                if not math.isfinite(value):
                    raise ParseError(i, col.name, f"non-finite {cell!r}")
                columns[col.name].append(value)
            else:
                columns[col.name].append(_parse_category(cell))

    data = {}
    for col in schema.columns:
        if col.kind == CONTINUOUS:
            data[col.name] = np.asarray(columns[col.name], dtype=np.float64)
        else:
            data[col.name] = np.asarray(columns[col.name], dtype=object)
    return Table(schema, data)


def _parse_category(cell: str):
    """Discrete cells parse to int when possible, else stay strings."""
    try:
        return int(cell)
    except ValueError:
        return cell


# ---------------------------------------------------------------------------
# Correlation structure
# ---------------------------------------------------------------------------

@dataclass
class CorrelationResult:
    """Pearson matrix over continuous feature columns.

    Zero-variance columns get 0.0 off-diagonal entries (diagonal stays 1.0)
    and are listed in ``zero_variance`` so reports can flag them instead of
    rendering NaNs.
    """

    features: list[str]
    matrix: np.ndarray
    zero_variance: list[str]
    n_rows: int


def correlation_matrix(table: Table, class_filter=None) -> CorrelationResult:
    """Pearson correlations of continuous features, optionally class-filtered.

    The result is symmetric with a diagonal of exactly 1.0 and entries in
    [-1, 1]; values within 1e-12 of +/-1 are snapped to the exact bound so
    algebraically perfect (anti)correlations survive float rounding.

    Raises:
        InsufficientData: fewer than 2 rows remain after filtering.
    """
    if class_filter is not None:
        idx = table.class_indices(class_filter)
        if len(idx) < 2:
            raise InsufficientData(
                f"correlation needs >= 2 rows, got {len(idx)} for class {class_filter!r}"
            )
        table = table.select_rows(idx)
    elif table.n_rows < 2:
        raise InsufficientData(f"correlation needs >= 2 rows, got {table.n_rows}")

    names = table.schema.continuous_features
    X = table.feature_matrix(names)
    centered = X - X.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    unit = centered / safe
    corr = unit.T @ unit
    corr = np.clip(corr, -1.0, 1.0)
    corr[np.abs(corr - 1.0) < 1e-12] = 1.0
    corr[np.abs(corr + 1.0) < 1e-12] = -1.0
    corr = (corr + corr.T) / 2.0
    corr[zero, :] = 0.0
    corr[:, zero] = 0.0
    np.fill_diagonal(corr, 1.0)
    return CorrelationResult(
        features=list(names),
        matrix=corr,
        zero_variance=[n for n, z in zip(names, zero) if z],
        n_rows=table.n_rows,
    )


# ---------------------------------------------------------------------------
# Splitting and resampling
# ---------------------------------------------------------------------------

def split_table(table: Table, strategy: str, test_fraction: float,
                seed: int) -> tuple[Table, Table]:
    """Partition rows into disjoint, exhaustive (train, test) tables.

    Strategies:
        random:     seeded shuffle, first round(n * test_fraction) rows to test.
        stratified: per-class allocation, preserving the class ratio within
                    +/-1 row per class.
        grouped:    whole groups (schema group column) are assigned to one
                    side only; test grows until it reaches the target row count.

    Both partitions keep the original row order.  Identical seeds produce
    identical splits.

    Raises:
        DegenerateSplit: a partition would be empty.
    """
    n = table.n_rows
    if n == 0:
        raise EmptyInput("cannot split an empty table")
    if not 0.0 < test_fraction < 1.0:
        raise DegenerateSplit(f"test_fraction {test_fraction} outside (0, 1)")
    rng = spawn(seed, "split", strategy)

    if strategy == "random":
        n_test = int(round(n * test_fraction))
        perm = rng.permutation(n)
        test_idx = perm[:n_test]
    elif strategy == "stratified":
        y = table.labels().tolist()
        test_parts = []
        for cat in table.categories[table.schema.target_column]:
            members = np.flatnonzero(np.asarray([v == cat for v in y]))
            k = int(round(len(members) * test_fraction))
            take = rng.permutation(len(members))[:k]
            test_parts.append(members[take])
        test_idx = np.concatenate(test_parts) if test_parts else np.empty(0, dtype=np.intp)
    elif strategy == "grouped":
        groups = [group_id(v) for v in table.groups().tolist()]
        unique = sorted(set(groups), key=str)
        order = rng.permutation(len(unique))
        target = int(round(n * test_fraction))
        member_of = {g: np.flatnonzero(np.asarray([v == g for v in groups]))
                     for g in unique}
        test_parts, count = [], 0
        for j in order:
            if count >= target:
                break
            rows = member_of[unique[j]]
            test_parts.append(rows)
            count += len(rows)
        test_idx = np.concatenate(test_parts) if test_parts else np.empty(0, dtype=np.intp)
    else:
        raise DegenerateSplit(f"unknown split strategy {strategy!r}")

    test_mask = np.zeros(n, dtype=bool)
    test_mask[np.asarray(test_idx, dtype=np.intp)] = True
    if not test_mask.any() or test_mask.all():
        raise DegenerateSplit(
            f"test_fraction {test_fraction} leaves an empty partition for n={n}"
        )
    train = table.select_rows(np.flatnonzero(~test_mask))
    test = table.select_rows(np.flatnonzero(test_mask))
    return train, test


def group_id(value) -> str:
    """Group identity of a group-column value: strip a trailing ``_<int>``.

    Recording ids like ``phon_R01_S01_1`` carry a take index; rows of the
    same subject must never straddle a grouped split, so the id's trailing
    integer is dropped.  Values without one are their own group.
    """
    head, _, tail = str(value).rpartition("_")
    return head if head and tail.isdigit() else str(value)


def undersample(table: Table, target_counts: dict, seed: int) -> Table:
    """Draw the requested number of rows per class, without replacement.

    Classes absent from ``target_counts`` are dropped.  Selected rows keep
    their original relative order, so requesting the full per-class counts
    returns the same multiset of rows regardless of seed.

    Raises:
        InsufficientClassRows: a target exceeds the rows available.
    """
    rng = spawn(seed, "undersample")
    keep_parts = []
    for cat, want in target_counts.items():
        members = table.class_indices(cat)
        if want > len(members):
            raise InsufficientClassRows(
                f"class {cat!r}: requested {want}, only {len(members)} available"
            )
        take = rng.permutation(len(members))[:want]
        keep_parts.append(members[take])
    if not keep_parts:
        raise EmptyInput("target_counts is empty")
    keep = np.sort(np.concatenate(keep_parts))
    return table.select_rows(keep)
