"""Regression trees fitted to second-order statistics, with exact and histogram split search."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .binning import BundledBins
from .losses import leaf_weight, split_gain

# gains within this relative band of the best are treated as ties (lowest feature, then threshold)
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def _pick(gain: np.ndarray) -> tuple[int, int] | None:
    """First (feature, position) within tie tolerance of the maximum gain; gain is (positions x features)."""
    if gain.size == 0:
        return None
    best = np.max(gain)
    if not np.isfinite(best) or best <= 0.0:
        return None
    ok = gain >= best - TIE_RTOL * max(1.0, abs(best))
    feats = np.flatnonzero(ok.any(axis=0))
    f = int(feats[0])
    pos = int(np.flatnonzero(ok[:, f])[0])
    return f, pos


def best_split_exact(X: np.ndarray, rows: np.ndarray, g: np.ndarray, h: np.ndarray, lam: float, gamma: float, min_child_hessian: float) -> Split | None:
    """Scan every boundary between sorted distinct values of every feature.

    ``g`` and ``h`` are aligned with ``rows``.
    """
    if rows.size < 2:
        return None
    Xn = X[rows]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    G, H = float(g.sum()), float(h.sum())
    GR, HR = G - GL, H - HL
    valid = (xs[1:] > xs[:-1]) & (HL >= min_child_hessian) & (HR >= min_child_hessian)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(valid, split_gain(GL, HL, GR, HR, lam, gamma), -np.inf)
    picked = _pick(gain)
    if picked is None:
        return None
    f, pos = picked
    lo, hi = xs[pos, f], xs[pos + 1, f]
    mid = lo + (hi - lo) / 2.0
    return Split(f, float(mid if mid > lo else hi), float(gain[pos, f]))


def best_split_histogram(bins: BundledBins, edges, rows: np.ndarray, g: np.ndarray, h: np.ndarray, lam: float, gamma: float, min_child_hessian: float) -> Split | None:
    """Scan the precomputed bin edges using per-node gradient histograms."""
    if rows.size < 2:
        return None
    hg, hh, G, H = bins.feature_histograms(rows, g, h)
    GL = np.cumsum(hg, axis=1)[:, :-1].T
    HL = np.cumsum(hh, axis=1)[:, :-1].T
    GR, HR = G - GL, H - HL
    n_edges = bins.n_bins - 1
    exists = np.arange(GL.shape[0])[:, None] < n_edges[None, :]
    valid = exists & (HL >= min_child_hessian) & (HR >= min_child_hessian)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(valid, split_gain(GL, HL, GR, HR, lam, gamma), -np.inf)
    picked = _pick(gain)
    if picked is None:
        return None
    f, pos = picked
    return Split(f, float(edges[f][pos]), float(gain[pos, f]))


@dataclass
class Tree:
    """Flat binary tree. Leaves have ``feature == -1``; rows go left when x < threshold."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(int(self.left[i])), walk(int(self.right[i])))
        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            n = node[active]
            go_left = X[active, self.feature[n]] < self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_nested(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i])}
        return {
            "split_feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_nested(int(self.left[i])),
            "right": self.to_nested(int(self.right[i])),
        }

    @classmethod
    def from_nested(cls, doc: dict) -> "Tree":
        feats, thr, left, right, val = [], [], [], [], []

        def add(node: dict) -> int:
            i = len(feats)
            feats.append(-1)
            thr.append(0.0)
            left.append(-1)
            right.append(-1)
            val.append(0.0)
            if "leaf" in node:
                val[i] = float(node["leaf"])
                return i
            feats[i] = int(node["split_feature"])
            thr[i] = float(node["threshold"])
            left[i] = add(node["left"])
            right[i] = add(node["right"])
            return i

        add(doc)
        return cls(np.array(feats, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(val))


SplitFinder = Callable[[np.ndarray, np.ndarray, np.ndarray], "Split | None"]


def grow_tree(X: np.ndarray, rows: np.ndarray, g: np.ndarray, h: np.ndarray, max_depth: int, lam: float, find_split: SplitFinder) -> Tree:
    """Depth-first growth from ``rows`` (``g``/``h`` indexed by absolute row id)."""
    feats: list[int] = []
    thr: list[float] = []
    left: list[int] = []
    right: list[int] = []
    val: list[float] = []

    def node(idx: np.ndarray, depth: int) -> int:
        i = len(feats)
        feats.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        val.append(0.0)
        gi, hi = g[idx], h[idx]
        split = find_split(idx, gi, hi) if depth < max_depth else None
        if split is None:
            val[i] = leaf_weight(float(gi.sum()), float(hi.sum()), lam)
            return i
        go_left = X[idx, split.feature] < split.threshold
        feats[i] = split.feature
        thr[i] = split.threshold
        left[i] = node(idx[go_left], depth + 1)
        right[i] = node(idx[~go_left], depth + 1)
        return i

    node(np.asarray(rows, dtype=np.int64), 0)
    return Tree(np.array(feats, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(val))
