"""Quantile bin edges and exclusive feature bundling over bin codes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def fit_bin_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Split thresholds (midpoints between neighbouring distinct values), at most ``max_bins - 1``.

    With no more distinct values than ``max_bins`` every gap between distinct
    values becomes an edge, so the candidate set equals the exact scan's.
    """
    u = np.unique(column)
    if u.size <= 1:
        return np.empty(0)
    mids = _midpoints(u[:-1], u[1:])
    if u.size <= max_bins:
        return mids
    q = np.quantile(column, np.arange(1, max_bins) / max_bins)
    pos = np.searchsorted(u, q, side="right") - 1
    pos = np.unique(np.clip(pos, 0, u.size - 2))
    return mids[pos]


def _midpoints(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    mid = lo + (hi - lo) / 2.0
    # adjacent floats: the midpoint can round onto ``lo``, which would misroute it
    return np.where(mid > lo, mid, hi)


@dataclass(frozen=True)
class BinMapper:
    edges: tuple[np.ndarray, ...]

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int) -> "BinMapper":
        if max_bins < 2:
            raise ValueError("histogram_bins must be >= 2")
        return cls(tuple(fit_bin_edges(X[:, j], max_bins) for j in range(X.shape[1])))

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Bin code per value: code <= b exactly when x < edges[b]."""
        out = np.empty(X.shape, dtype=np.int32)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="right")
        return out

    def default_bins(self) -> np.ndarray:
        """Code that 0.0 falls into, per feature."""
        return np.array([int(np.searchsorted(e, 0.0, side="right")) for e in self.edges], dtype=np.int64)


@dataclass(frozen=True)
class BundleMap:
    """Greedy grouping of mutually (near-)exclusive features.

    ``bundles[p]`` lists the feature indices merged into synthetic column
    ``p``; ``conflicts[p]`` is the number of co-nonzero row pairs accepted
    inside it.
    """

    bundles: tuple[tuple[int, ...], ...]
    conflicts: tuple[int, ...]
    n_features: int

    def to_dict(self) -> dict:
        return {"bundles": [list(b) for b in self.bundles], "conflicts": list(self.conflicts), "n_features": self.n_features}

    @classmethod
    def from_dict(cls, doc: dict) -> "BundleMap":
        return cls(tuple(tuple(b) for b in doc["bundles"]), tuple(doc["conflicts"]), doc["n_features"])

    @classmethod
    def identity(cls, n_features: int) -> "BundleMap":
        return cls(tuple((j,) for j in range(n_features)), (0,) * n_features, n_features)


def efb_bundle(features: np.ndarray, conflict_max: int = 0) -> BundleMap:
    """Bundle features whose non-zero rows overlap in at most ``conflict_max`` places.

    Features are visited in descending non-zero count; each joins the first
    bundle whose total conflict count stays within the limit.
    """
    nz = np.asarray(features) != 0.0
    n_features = nz.shape[1]
    counts = nz.sum(axis=0)
    order = np.argsort(-counts, kind="stable")
    nz_int = nz.astype(np.int64)
    co = nz_int.T @ nz_int
    bundles: list[list[int]] = []
    conflicts: list[int] = []
    for f in order:
        placed = False
        for p, members in enumerate(bundles):
            added = int(co[f, members].sum())
            if conflicts[p] + added <= conflict_max:
                members.append(int(f))
                conflicts[p] += added
                placed = True
                break
        if not placed:
            bundles.append([int(f)])
            conflicts.append(0)
    return BundleMap(tuple(tuple(b) for b in bundles), tuple(conflicts), n_features)


class BundledBins:
    """Bin codes of a training matrix stored one synthetic column per bundle.

    In a multi-feature bundle a feature only occupies slots for its
    non-default bins (the bin holding 0.0); the default bin's histogram mass
    is recovered by subtraction from the node total. Singleton bundles store
    every bin.
    """

    def __init__(self, codes: np.ndarray, n_bins: np.ndarray, default_bins: np.ndarray, bundle_map: BundleMap):
        n, n_features = codes.shape
        self.bundle_map = bundle_map
        self.n_bins = n_bins
        self.default_bins = default_bins
        max_bins = int(n_bins.max()) if n_features else 1
        # feat_slot[f, b]: global histogram slot, -1 = derived default bin, -2 = padding
        self.feat_slot = np.full((n_features, max_bins), -2, dtype=np.int64)
        self.has_default = np.zeros(n_features, dtype=bool)
        columns = []
        slot_base = 0
        self.column_offsets = []
        for members in bundle_map.bundles:
            col = np.zeros(n, dtype=np.int64)
            local = 1 if len(members) > 1 else 0
            assigned = np.zeros(n, dtype=bool)
            for f in members:
                nb = int(n_bins[f])
                if len(members) == 1:
                    self.feat_slot[f, :nb] = slot_base + np.arange(nb)
                    col = codes[:, f].astype(np.int64)
                    local = nb
                    continue
                d = int(default_bins[f])
                self.has_default[f] = True
                bins = [b for b in range(nb) if b != d]
                lookup = np.full(nb, -1, dtype=np.int64)
                lookup[bins] = local + np.arange(len(bins))
                self.feat_slot[f, bins] = slot_base + lookup[bins]
                self.feat_slot[f, d] = -1
                active = (codes[:, f] != d) & ~assigned
                col[active] = lookup[codes[active, f]]
                assigned |= active
                local += len(bins)
            self.column_offsets.append(slot_base)
            columns.append(col)
            slot_base += local
        self.n_slots = slot_base
        self.column_offsets = np.array(self.column_offsets, dtype=np.int64)
        self.columns = (np.stack(columns, axis=1) if columns else np.zeros((n, 0), dtype=np.int64))
        self.flat = self.columns + self.column_offsets[None, :]

    def feature_histograms(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray):
        """(F x B) gradient and hessian histograms for ``rows`` plus node totals."""
        flat = self.flat[rows]
        P = flat.shape[1]
        G_tot, H_tot = float(g.sum()), float(h.sum())
        slot_g = np.bincount(flat.ravel(), weights=np.repeat(g, P), minlength=self.n_slots)
        slot_h = np.bincount(flat.ravel(), weights=np.repeat(h, P), minlength=self.n_slots)
        slot_g = np.append(slot_g, 0.0)
        slot_h = np.append(slot_h, 0.0)
        idx = np.where(self.feat_slot >= 0, self.feat_slot, self.n_slots)
        hg = slot_g[idx]
        hh = slot_h[idx]
        if self.has_default.any():
            f = np.flatnonzero(self.has_default)
            d = self.default_bins[f]
            hg[f, d] = G_tot - (hg[f].sum(axis=1) - hg[f, d])
            hh[f, d] = H_tot - (hh[f].sum(axis=1) - hh[f, d])
        return hg, hh, G_tot, H_tot

    def unbundle(self) -> np.ndarray:
        """Recover per-feature bin codes from the bundled columns."""
        n = self.columns.shape[0]
        out = np.empty((n, self.feat_slot.shape[0]), dtype=np.int64)
        for p, members in enumerate(self.bundle_map.bundles):
            glob = self.flat[:, p]
            for f in members:
                if len(members) == 1:
                    out[:, f] = self.columns[:, p]
                    continue
                slot_to_bin = {int(s): b for b, s in enumerate(self.feat_slot[f]) if s >= 0}
                codes = np.full(n, int(self.default_bins[f]), dtype=np.int64)
                for s, b in slot_to_bin.items():
                    codes[glob == s] = b
                out[:, f] = codes
        return out
