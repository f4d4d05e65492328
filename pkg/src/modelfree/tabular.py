"""Numeric tabular data: CSV ingestion, export and column summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateColumn,
    EmptyFile,
    MissingHeader,
    NonNumericCell,
    RaggedRow,
    UnknownColumn,
)


@dataclass(frozen=True)
class Dataset:
    """Ordered, equal-length, finite numeric columns.

    Column arrays are stored read-only so a Dataset can be shared freely.
    """

    names: tuple[str, ...]
    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.names:
            raise EmptyFile("dataset has no columns")
        if len(self.names) != len(self.values):
            raise ValueError("names and values differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("column names must be unique")
        if any(not n for n in self.names):
            raise ValueError("column names must be nonempty")
        cols = []
        for name, v in zip(self.names, self.values):
            a = np.array(v, dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"column {name!r} contains non-finite values")
            a.setflags(write=False)
            cols.append(a)
        lengths = {a.size for a in cols}
        if len(lengths) != 1:
            raise ValueError("columns differ in length")
        if cols[0].size < 1:
            raise EmptyFile("dataset has no rows")
        object.__setattr__(self, "values", tuple(cols))

    @classmethod
    def from_columns(cls, columns: Mapping[str, Iterable[float]] | Sequence[tuple[str, Iterable[float]]]):
        items = list(columns.items()) if isinstance(columns, Mapping) else list(columns)
        return cls(tuple(k for k, _ in items), tuple(np.asarray(v, dtype=float) for _, v in items))

    @property
    def n_rows(self) -> int:
        return int(self.values[0].size)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise UnknownColumn(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.names, tuple(v[rows] for v in self.values))


@dataclass(frozen=True)
class ColumnStats:
    mean: float
    sample_sd: float
    quantiles: dict[float, float]


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(row, col, text) from None
    if not math.isfinite(value):
        raise NonNumericCell(row, col, text)
    return value


def read_csv(path: str | Path) -> Dataset:
    """Load a headered, all-numeric CSV file.

    Row and column numbers in errors are 1-based and count the header as
    row 1, so they match what a text editor shows.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        text = fh.read()
    if not text.strip():
        raise EmptyFile(f"{path}: file is empty")
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:  # pragma: no cover - guarded by the strip() check
        raise EmptyFile(f"{path}: file is empty") from None
    header = [h.strip() for h in header]
    if not header or any(not h for h in header):
        raise MissingHeader(f"{path}: header row missing or has blank names")
    # A header made only of numbers is almost surely a data row.
    if all(_looks_numeric(h) for h in header):
        raise MissingHeader(f"{path}: first row is numeric, expected column names")
    if len(set(header)) != len(header):
        raise MissingHeader(f"{path}: duplicate column names in header")

    rows: list[list[float]] = []
    for lineno, fields in enumerate(reader, start=2):
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        if len(fields) != len(header):
            raise RaggedRow(lineno, len(fields), len(header))
        rows.append([_parse_cell(f.strip(), lineno, j) for j, f in enumerate(fields, start=1)])
    if not rows:
        raise EmptyFile(f"{path}: header present but no data rows")
    table = np.array(rows, dtype=np.float64)
    return Dataset(tuple(header), tuple(table[:, j] for j in range(table.shape[1])))


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write ``d`` with 17 significant digits, enough for an exact round trip."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(d.names)
        for i in range(d.n_rows):
            w.writerow([format(float(v[i]), ".17g") for v in d.values])


def type1_index(p: float, n: int) -> int:
    """0-based index of the type-1 (inverse ECDF) quantile of ``n`` sorted values."""
    frac = Fraction(p).limit_denominator(10**9)
    k = math.ceil(frac * n)
    return min(max(k, 1), n) - 1


def quantile_type1(x: np.ndarray, p: float) -> float:
    xs = np.sort(np.asarray(x, dtype=float))
    return float(xs[type1_index(p, xs.size)])


def sample_sd(x: np.ndarray) -> float:
    """Standard deviation with denominator n - 1.

    Computed on the sorted values so the result depends only on the
    multiset, not on row order.
    """
    x = np.sort(np.asarray(x, dtype=float))
    if x.size < 2:
        raise DegenerateColumn("sample standard deviation needs at least 2 values")
    return float(np.std(x, ddof=1))


def column_stats(d: Dataset, name: str, probs: Sequence[float] = (0.25, 0.5, 0.75)) -> ColumnStats:
    x = d.column(name)
    if x.size < 2:
        raise DegenerateColumn(f"column {name!r} has fewer than 2 rows")
    xs = np.sort(x)
    q = {float(p): float(xs[type1_index(p, xs.size)]) for p in probs}
    return ColumnStats(mean=float(np.mean(x)), sample_sd=sample_sd(x), quantiles=q)
