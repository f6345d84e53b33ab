"""Threshold-driven hybrid SMOTE + ADASYN oversampling."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..dataset import ClassDistribution, DataError, DataTable, class_distribution

PLAN_FORMAT = "automl-ids/balance-plan/v1"


@dataclass(frozen=True)
class BalancePlan:
    threshold: float
    counts: dict[int, int]
    target_count: dict[int, int]

    @property
    def minority_classes(self) -> frozenset[int]:
        return frozenset(self.target_count)

    def deficit(self, c: int) -> int:
        return max(self.target_count.get(c, 0) - self.counts[c], 0)

    def to_dict(self) -> dict:
        return {
            "format": PLAN_FORMAT,
            "threshold": self.threshold,
            "counts": {str(c): n for c, n in sorted(self.counts.items())},
            "minority_classes": sorted(self.target_count),
            "target_count": {str(c): n for c, n in sorted(self.target_count.items())},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BalancePlan":
        if doc.get("format") != PLAN_FORMAT:
            raise DataError(f"not a balance plan: {doc.get('format')!r}")
        return cls(
            float(doc["threshold"]),
            {int(c): int(n) for c, n in doc["counts"].items()},
            {int(c): int(n) for c, n in doc["target_count"].items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compute_balance_plan(dist: ClassDistribution) -> BalancePlan:
    """Classes below half the mean class size are minorities, each targeted to floor(threshold)."""
    if len(dist.counts) < 2:
        raise DataError("balancing needs at least two classes")
    threshold = dist.total / len(dist.counts) / 2.0
    target = math.floor(threshold)
    minority = {c: target for c, n in dist.counts.items() if n < threshold}
    return BalancePlan(threshold, dict(dist.counts), minority)


def _neighbor_table(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other points for every row (Euclidean)."""
    _, idx = cKDTree(points).query(points, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((points.shape[0], k), dtype=np.int64)
    for i, row in enumerate(idx):
        row = row[row != i]
        out[i] = row[:k]
    return out


def _interpolate(base: np.ndarray, partner: np.ndarray, t: np.ndarray) -> np.ndarray:
    return base + t[:, None] * (partner - base)


def smote_generate(minority_rows, k: int, n_new: int, seed: int, return_pairs: bool = False):
    """Synthesize ``n_new`` rows as X + t * (X_i - X) with X_i among X's k nearest minority neighbours.

    A single-row class cannot be interpolated and is duplicated instead.
    """
    x = np.asarray(minority_rows, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if n_new <= 0:
        empty = np.empty((0, x.shape[1]))
        return (empty, np.empty((0, 2), dtype=np.int64)) if return_pairs else empty
    if x.shape[0] < 2:
        warnings.warn("minority class has a single row; duplicating it", stacklevel=2)
        out = np.repeat(x[:1], n_new, axis=0)
        pairs = np.zeros((n_new, 2), dtype=np.int64)
        return (out, pairs) if return_pairs else out
    k = max(1, min(k, x.shape[0] - 1))
    nn = _neighbor_table(x, k)
    base = rng.integers(0, x.shape[0], size=n_new)
    partner = nn[base, rng.integers(0, k, size=n_new)]
    t = rng.random(n_new)
    out = _interpolate(x[base], x[partner], t)
    return (out, np.stack([base, partner], axis=1)) if return_pairs else out


def largest_remainder(weights, total: int) -> np.ndarray:
    """Split ``total`` into integers proportional to ``weights`` (Hamilton's method, ties to lower index)."""
    w = np.asarray(weights, dtype=np.float64)
    quota = total * w / w.sum()
    alloc = np.floor(quota).astype(np.int64)
    rest = total - int(alloc.sum())
    if rest > 0:
        order = np.argsort(-(quota - alloc), kind="stable")
        alloc[order[:rest]] += 1
    return alloc


def adasyn_difficulty(all_rows: np.ndarray, all_labels: np.ndarray, minority_class: int, k: int) -> np.ndarray:
    """Fraction of each minority row's k nearest neighbours (over all rows) that belong to other classes."""
    k = max(1, min(k, all_rows.shape[0] - 1))
    members = np.flatnonzero(all_labels == minority_class)
    _, idx = cKDTree(all_rows).query(all_rows[members], k=k + 1)
    idx = np.atleast_2d(idx)
    r = np.empty(members.size)
    for i, (row_id, neigh) in enumerate(zip(members, idx)):
        neigh = neigh[neigh != row_id][:k]
        r[i] = np.count_nonzero(all_labels[neigh] != minority_class) / k
    return r


def adasyn_generate(
    minority_rows,
    full_table: DataTable,
    minority_class: int,
    k: int,
    n_new: int,
    seed: int,
    return_pairs: bool = False,
):
    """Adaptive synthesis weighted toward minority rows surrounded by other classes.

    ``minority_rows`` must be the rows of ``full_table`` labelled
    ``minority_class`` in table order. When every neighbourhood is pure the
    allocation falls back to plain SMOTE.
    """
    x = np.asarray(minority_rows, dtype=np.float64)
    if n_new <= 0:
        empty = np.empty((0, x.shape[1]))
        return (empty, np.empty((0, 2), dtype=np.int64)) if return_pairs else empty
    if x.shape[0] < 2:
        return smote_generate(x, k, n_new, seed, return_pairs)
    r = adasyn_difficulty(full_table.features, full_table.labels, minority_class, k)
    if r.sum() == 0:
        warnings.warn(
            f"class {minority_class}: all neighbourhoods pure, falling back to SMOTE", stacklevel=2
        )
        return smote_generate(x, k, n_new, seed, return_pairs)
    alloc = largest_remainder(r, n_new)
    rng = np.random.default_rng(seed)
    kk = max(1, min(k, x.shape[0] - 1))
    nn = _neighbor_table(x, kk)
    base = np.repeat(np.arange(x.shape[0]), alloc)
    partner = nn[base, rng.integers(0, kk, size=base.size)]
    t = rng.random(base.size)
    out = _interpolate(x[base], x[partner], t)
    return (out, np.stack([base, partner], axis=1)) if return_pairs else out


def split_deficit(deficit: int, smote_ratio: float = 0.5) -> tuple[int, int]:
    n_smote = math.ceil(deficit * smote_ratio)
    return n_smote, deficit - n_smote


def balance(
    train: DataTable,
    plan: BalancePlan,
    k: int = 5,
    seed: int = 0,
    smote_ratio: float = 0.5,
) -> DataTable:
    """Oversample every minority class of ``plan`` up to its target.

    SMOTE first produces its share for all minority classes; ADASYN then runs
    on the SMOTE-augmented table for the remainder.
    """
    dist = class_distribution(train).counts
    if dist != plan.counts:
        raise DataError("balance plan was computed from a different class distribution")
    feats = [train.features]
    labels = [train.labels]
    adasyn_share: dict[int, int] = {}
    for c in sorted(plan.minority_classes):
        n_smote, n_adasyn = split_deficit(plan.deficit(c), smote_ratio)
        adasyn_share[c] = n_adasyn
        rows = train.features[train.labels == c]
        new = smote_generate(rows, k, n_smote, seed=_class_seed(seed, c, 0))
        feats.append(new)
        labels.append(np.full(new.shape[0], c, dtype=np.int64))
    augmented = DataTable(
        train.feature_names, np.concatenate(feats), np.concatenate(labels), train.label_names
    )
    for c in sorted(plan.minority_classes):
        rows = augmented.features[augmented.labels == c]
        new = adasyn_generate(rows, augmented, c, k, adasyn_share[c], seed=_class_seed(seed, c, 1))
        feats.append(new)
        labels.append(np.full(new.shape[0], c, dtype=np.int64))
    return DataTable(
        train.feature_names, np.concatenate(feats), np.concatenate(labels), train.label_names
    )


def _class_seed(seed: int, c: int, phase: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, c, phase])
