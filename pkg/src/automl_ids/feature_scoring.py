"""Information-gain feature importance, normalized to sum to one."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DataError, DataTable

DEFAULT_BINS = 10


@dataclass(frozen=True)
class FeatureImportance:
    feature_names: tuple[str, ...]
    raw_ig: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_raw(cls, names, raw) -> "FeatureImportance":
        raw = np.maximum(np.asarray(raw, dtype=np.float64), 0.0)
        total = raw.sum()
        norm = raw / total if total > 0 else np.full(raw.size, 1.0 / raw.size)
        return cls(tuple(names), raw, norm)

    def ranking(self) -> np.ndarray:
        """Feature indices from most to least important (stable on ties)."""
        return np.argsort(-self.normalized, kind="stable")

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "raw_ig", "normalized"])
            for name, r, n in zip(self.feature_names, self.raw_ig, self.normalized):
                w.writerow([name, repr(float(r)), repr(float(n))])

    @classmethod
    def read_csv(cls, path) -> "FeatureImportance":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"feature", "raw_ig", "normalized"}:
            raise DataError(f"{path} is not a feature-importance CSV")
        return cls(
            tuple(r["feature"] for r in rows),
            np.array([float(r["raw_ig"]) for r in rows]),
            np.array([float(r["normalized"]) for r in rows]),
        )


def entropy(labels) -> float:
    """Shannon entropy in bits."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("entropy of an empty label set")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum())


def discretize(feature, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-frequency bin ids 0..B-1 with B <= bins.

    A feature with at most ``bins`` distinct values gets one bin per value;
    otherwise quantile cut points are used and duplicate cut points collapse.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = np.asarray(feature, dtype=np.float64)
    uniq, inverse = np.unique(x, return_inverse=True)
    if uniq.size <= bins:
        return inverse.astype(np.int64)
    edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, bins + 1)[1:-1]))
    codes = np.searchsorted(edges, x, side="right")
    _, codes = np.unique(codes, return_inverse=True)
    return codes.astype(np.int64)


def conditional_entropy(labels, codes) -> float:
    labels = np.asarray(labels)
    codes = np.asarray(codes)
    n = labels.size
    _, lab = np.unique(labels, return_inverse=True)
    _, cod = np.unique(codes, return_inverse=True)
    table = np.zeros((cod.max() + 1, lab.max() + 1))
    np.add.at(table, (cod, lab), 1.0)
    per_bin = table.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = table / per_bin[:, None]
        h = -np.where(p > 0, p * np.log2(p), 0.0).sum(axis=1)
    return float((per_bin / n * h).sum())


def information_gain(table: DataTable, bins: int = DEFAULT_BINS) -> FeatureImportance:
    if table.n_classes < 2 or np.unique(table.labels).size < 2:
        raise DataError("information gain needs at least two classes present")
    h_y = entropy(table.labels)
    raw = np.empty(table.n_features)
    for j in range(table.n_features):
        codes = discretize(table.features[:, j], bins)
        raw[j] = max(h_y - conditional_entropy(table.labels, codes), 0.0)
    return FeatureImportance.from_raw(table.feature_names, raw)
