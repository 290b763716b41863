"""Dataset container, CSV ingestion, and split utilities.

CSV contract: header row, one column named after the label (default
``label``), every other column numeric. Labels are mapped to class indices
in first-appearance order so downstream class-pair tables are unambiguous.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed input files or inconsistent dataset arguments."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels.

    Immutable after construction; safe to share across threads.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError(f"feature matrix must be 2-D with n >= 1, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"labels must be a vector of length {X.shape[0]}, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains non-finite values")
        p = len(self.class_names)
        if y.min(initial=0) < 0 or (y.size and y.max() >= p):
            raise DataError(f"labels must lie in [0, {p})")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return len(self.class_names)

    def subset(self, indices) -> "Dataset":
        """New dataset containing the given rows (repeats allowed)."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.p)


def ingest_csv(path, label_column: str = "label") -> Dataset:
    """Parse a dataset CSV into a :class:`Dataset`.

    Raises :class:`DataError` naming the offending row/column on a
    non-numeric feature cell, and on a missing label column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != label_idx)

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}")
            feats = []
            for col_no, cell in enumerate(row):
                if col_no == label_idx:
                    continue
                text = cell.strip()
                try:
                    value = float(text)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {header[col_no]!r}: "
                        f"non-numeric cell {cell!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(f"{path}: row {row_no}, column {header[col_no]!r}: non-finite value")
                feats.append(value)
            rows.append(feats)
            raw_labels.append(row[label_idx].strip())

    if not rows:
        raise DataError(f"{path}: no data rows")

    class_names: list[str] = []
    seen: dict[str, int] = {}
    y = np.empty(len(raw_labels), dtype=np.int64)
    for i, lab in enumerate(raw_labels):
        if lab not in seen:
            seen[lab] = len(class_names)
            class_names.append(lab)
        y[i] = seen[lab]

    return Dataset(np.asarray(rows, dtype=np.float64), y, feature_names, tuple(class_names))


def stratified_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded, per-class 80/20-style split. Returns (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in range(data.p):
        members = np.flatnonzero(data.y == cls)
        if members.size == 0:
            continue
        order = rng.permutation(members.size)
        n_test = int(round(members.size * test_fraction))
        n_test = min(max(n_test, 1), members.size - 1) if members.size > 1 else 0
        shuffled = members[order]
        test_idx.extend(shuffled[:n_test].tolist())
        train_idx.extend(shuffled[n_test:].tolist())
    train_idx.sort()
    test_idx.sort()
    return data.subset(train_idx), data.subset(test_idx)


@dataclass(frozen=True)
class ColumnStats:
    """Per-column descriptive statistics (mean, std, quartiles, max)."""

    name: str
    mean: float
    std: float
    q1: float
    median: float
    q3: float
    maximum: float


def describe_columns(data: Dataset) -> list[ColumnStats]:
    """Descriptive statistics for every feature column.

    Std uses the n-1 denominator; quartiles use linear interpolation.
    """
    out = []
    for j, name in enumerate(data.feature_names):
        col = data.X[:, j]
        std = float(np.std(col, ddof=1)) if col.size > 1 else 0.0
        q1, med, q3 = (float(v) for v in np.percentile(col, [25.0, 50.0, 75.0]))
        out.append(
            ColumnStats(
                name=name,
                mean=float(np.mean(col)),
                std=std,
                q1=q1,
                median=med,
                q3=q3,
                maximum=float(np.max(col)),
            )
        )
    return out
