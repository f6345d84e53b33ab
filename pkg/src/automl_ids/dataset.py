"""Loading, validation, stratified sampling and splitting of labeled flow-feature CSVs."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when an input file or table violates the ingestion contract."""


@dataclass(frozen=True)
class DataTable:
    """Numeric feature matrix plus integer-encoded labels.

    Arrays are made read-only on construction so a table can be shared
    between workers without copying.
    """

    feature_names: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DataError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if features.shape[1] != len(self.feature_names):
            raise DataError("feature_names length does not match feature columns")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.label_names)):
            raise DataError("label ids must lie in 0..C-1")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def take(self, rows: np.ndarray) -> "DataTable":
        rows = np.asarray(rows, dtype=np.int64)
        return DataTable(self.feature_names, self.features[rows], self.labels[rows], self.label_names)

    def with_features(self, features: np.ndarray, feature_names=None) -> "DataTable":
        names = self.feature_names if feature_names is None else feature_names
        return DataTable(names, features, self.labels, self.label_names)


@dataclass(frozen=True)
class ClassDistribution:
    counts: dict[int, int]
    total: int

    def as_array(self, n_classes: int | None = None) -> np.ndarray:
        size = n_classes if n_classes is not None else (max(self.counts) + 1 if self.counts else 0)
        out = np.zeros(size, dtype=np.int64)
        for c, n in self.counts.items():
            out[c] = n
        return out


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_row: np.ndarray
    k: int
    warnings: tuple[str, ...] = field(default=())

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)

    def valid_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)


def _repair_column(values: np.ndarray, name: str) -> np.ndarray:
    finite = np.isfinite(values)
    if not finite.any():
        raise DataError(f"column {name!r} has no finite values")
    if finite.all():
        return values
    good = values[finite]
    out = values.copy()
    out[np.isposinf(values)] = good.max()
    out[np.isneginf(values)] = good.min()
    out[np.isnan(values)] = np.median(good)
    return out


def repair_non_finite(matrix: np.ndarray, names) -> np.ndarray:
    """Replace +inf/-inf by the column's finite max/min and NaN by its finite median."""
    matrix = np.asarray(matrix, dtype=np.float64)
    out = matrix.copy()
    for j in range(matrix.shape[1]):
        out[:, j] = _repair_column(matrix[:, j], names[j])
    return out


def _parse_float(text: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    low = text.lower()
    if low in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if low in ("-inf", "-infinity"):
        return -math.inf
    if low in ("nan", "na", "null", "none"):
        return math.nan
    return float(text)


def load_csv(path, label_column: str) -> DataTable:
    """Read a comma-separated flow table with a header row.

    Labels are factorized in order of first appearance. Non-finite values are
    repaired per column (see ``repair_non_finite``).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]
        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}"
                )
            raw_labels.append(record[label_idx].strip())
            try:
                rows.append([_parse_float(v) for i, v in enumerate(record) if i != label_idx])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path} has no data rows")
    matrix = repair_non_finite(np.array(rows, dtype=np.float64), feature_names)
    label_names: dict[str, int] = {}
    labels = np.array([label_names.setdefault(s, len(label_names)) for s in raw_labels])
    return DataTable(tuple(feature_names), matrix, labels, tuple(label_names))


def write_csv(table: DataTable, path, label_column: str = "Label") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*table.feature_names, label_column])
        for row, label in zip(table.features, table.labels):
            writer.writerow([repr(float(v)) for v in row] + [table.label_names[label]])


def class_distribution(table: DataTable) -> ClassDistribution:
    if table.n_rows == 0:
        raise DataError("empty table")
    counts = np.bincount(table.labels, minlength=table.n_classes)
    return ClassDistribution({c: int(n) for c, n in enumerate(counts)}, int(table.n_rows))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _stratified_counts(counts: np.ndarray, fraction: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Per-class round-half-up counts, then the largest class absorbs the total's rounding gap."""
    want = np.array([_round_half_up(fraction * n) for n in counts], dtype=np.int64)
    want = np.clip(want, lo, hi)
    target = _round_half_up(fraction * counts.sum())
    gap = target - int(want.sum())
    if gap:
        big = int(np.argmax(counts))
        want[big] = int(np.clip(want[big] + gap, lo[big], hi[big]))
    return want


def _rows_by_class(labels: np.ndarray, n_classes: int) -> list[np.ndarray]:
    return [np.flatnonzero(labels == c) for c in range(n_classes)]


def stratified_sample(table: DataTable, fraction: float, seed: int) -> DataTable:
    """Draw a class-stratified subset; every class keeps at least one row."""
    if not (0.0 < fraction <= 1.0):
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    counts = class_distribution(table).as_array(table.n_classes)
    if np.any(counts < 1):
        raise DataError("every class needs at least one sample")
    if fraction == 1.0:
        return table
    take = _stratified_counts(counts, fraction, np.ones_like(counts), counts)
    rng = np.random.default_rng(seed)
    chosen = [
        np.sort(rng.choice(rows, size=n, replace=False))
        for rows, n in zip(_rows_by_class(table.labels, table.n_classes), take)
    ]
    return table.take(np.sort(np.concatenate(chosen)))


def train_test_split(table: DataTable, test_fraction: float, seed: int) -> tuple[DataTable, DataTable]:
    """Stratified hold-out split. Row order within each part follows the source table."""
    if not (0.0 < test_fraction < 1.0):
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    counts = class_distribution(table).as_array(table.n_classes)
    if np.any(counts < 2):
        bad = [table.label_names[c] for c in np.flatnonzero(counts < 2)]
        raise DataError(f"classes with fewer than 2 samples cannot be split: {bad}")
    n_test = _stratified_counts(counts, test_fraction, np.ones_like(counts), counts - 1)
    rng = np.random.default_rng(seed)
    test_parts = []
    for rows, n in zip(_rows_by_class(table.labels, table.n_classes), n_test):
        test_parts.append(rng.choice(rows, size=n, replace=False))
    is_test = np.zeros(table.n_rows, dtype=bool)
    is_test[np.concatenate(test_parts)] = True
    return table.take(np.flatnonzero(~is_test)), table.take(np.flatnonzero(is_test))


def kfold_indices(table: DataTable, k: int, seed: int) -> FoldAssignment:
    """Stratified K-fold assignment.

    Rows of each class are shuffled and dealt round-robin to folds; the
    starting fold rotates between classes so overall fold sizes stay level.
    Classes smaller than ``k`` are still dealt round-robin and a warning is
    recorded.
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    fold_of_row = np.full(table.n_rows, -1, dtype=np.int64)
    notes: list[str] = []
    start = 0
    for c, rows in enumerate(_rows_by_class(table.labels, table.n_classes)):
        if rows.size == 0:
            continue
        if rows.size < k:
            msg = f"class {table.label_names[c]!r} has {rows.size} rows < k={k}; folds will lack it"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
        rows = rng.permutation(rows)
        fold_of_row[rows] = (start + np.arange(rows.size)) % k
        start = (start + rows.size) % k
    return FoldAssignment(fold_of_row, k, tuple(notes))


def align_labels(table: DataTable, label_names) -> DataTable:
    """Re-express ``table``'s labels in the id order of ``label_names``."""
    label_names = tuple(label_names)
    index = {name: i for i, name in enumerate(label_names)}
    unknown = sorted(set(table.label_names) - set(index))
    if unknown:
        raise DataError(f"labels not seen in training: {unknown}")
    lut = np.array([index[name] for name in table.label_names], dtype=np.int64)
    return DataTable(table.feature_names, table.features, lut[table.labels], label_names)


def load_features(path, label_column: str | None = None) -> tuple[tuple[str, ...], np.ndarray, list[str] | None]:
    """Feature matrix of a CSV whose label column is optional.

    Returns (feature names, matrix, raw label strings or None).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        label_idx = header.index(label_column) if label_column in header else -1
        names = tuple(h for i, h in enumerate(header) if i != label_idx)
        rows, labels = [], []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
            if label_idx >= 0:
                labels.append(record[label_idx].strip())
            try:
                rows.append([_parse_float(v) for i, v in enumerate(record) if i != label_idx])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if rows:
        matrix = repair_non_finite(matrix, names)
    return names, matrix, (labels if label_idx >= 0 else None)
