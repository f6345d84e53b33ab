"""Boosted multiclass tree ensembles: training, prediction and JSON serialisation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..dataset import DataError, DataTable
from .binning import BinMapper, BundledBins, BundleMap, efb_bundle
from .goss import goss_sample
from .losses import log_loss, softmax, softmax_gradients
from .tree import Tree, best_split_exact, best_split_histogram, grow_tree

EXACT = "exact_second_order"
HISTOGRAM = "histogram_goss_efb"
LEARNER_KINDS = (EXACT, HISTOGRAM)
MODEL_FORMAT = "automl-ids/gbdt-model/v1"
MIN_PRIOR = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    lambda_l2: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 1e-3
    goss_a: float = 0.2
    goss_b: float = 0.1
    histogram_bins: int = 255
    efb_conflict_max: int = 0

    def __post_init__(self) -> None:
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.lambda_l2 < 0 or self.gamma < 0 or self.min_child_hessian < 0:
            raise ValueError("lambda_l2, gamma and min_child_hessian must be >= 0")
        if not (0.0 <= self.goss_a < 1.0 and 0.0 < self.goss_b <= 1.0):
            raise ValueError("goss_a must be in [0, 1) and goss_b in (0, 1]")
        if self.goss_a + self.goss_b > 1.0 + 1e-12:
            raise ValueError("goss_a + goss_b must be <= 1")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be >= 2")
        if self.efb_conflict_max < 0:
            raise ValueError("efb_conflict_max must be >= 0")

    def with_(self, **changes) -> "Hyperparams":
        return replace(self, **changes)


@dataclass
class GbdtModel:
    learner_kind: str
    label_names: tuple[str, ...]
    feature_names: tuple[str, ...]
    base_score: np.ndarray
    hyperparams: Hyperparams
    trees: list[list[Tree]] = field(default_factory=list)
    bundles: BundleMap | None = None
    train_loss: list[float] = field(default_factory=list)

    @property
    def class_count(self) -> int:
        return len(self.label_names)

    @property
    def n_trees(self) -> int:
        return sum(len(r) for r in self.trees)

    def __post_init__(self) -> None:
        self._compiled = None

    def _compile(self):
        """Concatenate all trees; leaves loop onto themselves so traversal needs no masking."""
        if self._compiled is None:
            feats, thr, left, right, val, roots = [], [], [], [], [], []
            base = 0
            depth = 0
            for rnd in self.trees:
                for t in rnd:
                    roots.append(base)
                    leaf = t.feature < 0
                    own = np.arange(t.n_nodes) + base
                    feats.append(np.where(leaf, 0, t.feature))
                    thr.append(np.where(leaf, np.inf, t.threshold))
                    left.append(np.where(leaf, own, t.left + base))
                    right.append(np.where(leaf, own, t.right + base))
                    val.append(t.value)
                    depth = max(depth, t.depth())
                    base += t.n_nodes
            cat = (lambda a, dt: np.concatenate(a).astype(dt) if a else np.empty(0, dtype=dt))
            self._compiled = (
                cat(feats, np.int64), cat(thr, np.float64), cat(left, np.int64),
                cat(right, np.int64), cat(val, np.float64), np.array(roots, dtype=np.int64), depth,
            )
        return self._compiled

    def _traverse(self, X: np.ndarray, chunk_cells: int = 2_000_000):
        feat, thr, left, right, val, roots, depth = self._compile()
        n = X.shape[0]
        T = roots.size
        step = max(1, chunk_cells // max(T, 1))
        for s in range(0, n, step):
            Xc = X[s:s + step]
            node = np.broadcast_to(roots, (Xc.shape[0], T)).copy()
            r = np.arange(Xc.shape[0])[:, None]
            visits = np.zeros(Xc.shape[0], dtype=np.int64)
            for _ in range(depth):
                internal = np.isfinite(thr[node])
                visits += internal.sum(axis=1)
                go_left = Xc[r, feat[node]] < thr[node]
                node = np.where(go_left, left[node], right[node])
            yield s, node, val, visits

    def raw_scores(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        out = np.tile(self.base_score, (X.shape[0], 1))
        if not self.trees:
            return out
        C = self.class_count
        lr = self.hyperparams.learning_rate
        for s, node, val, _ in self._traverse(X):
            leaf = val[node].reshape(node.shape[0], -1, C)
            out[s:s + node.shape[0]] += lr * leaf.sum(axis=1)
        return out

    def decision_path_length(self, X: np.ndarray) -> float:
        """Mean number of internal nodes a row passes through across the whole ensemble."""
        X = self._check(X)
        if not self.trees or X.shape[0] == 0:
            return 0.0
        total = sum(int(v.sum()) for _, _, _, v in self._traverse(X))
        return total / X.shape[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.raw_scores(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.raw_scores(X), axis=1)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise DataError(f"model expects {len(self.feature_names)} features, got shape {X.shape}")
        return X

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "learner_kind": self.learner_kind,
            "label_names": list(self.label_names),
            "feature_names": list(self.feature_names),
            "base_score": [float(v) for v in self.base_score],
            "hyperparams": asdict(self.hyperparams),
            "bundles": self.bundles.to_dict() if self.bundles is not None else None,
            "trees": [[t.to_nested() for t in rnd] for rnd in self.trees],
        }


def serialize(model: GbdtModel) -> bytes:
    return json.dumps(model.to_dict(), separators=(",", ":")).encode("utf-8")


def deserialize(blob: bytes | str) -> GbdtModel:
    try:
        doc = json.loads(blob)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"malformed model document: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DataError("not a gbdt model document")
    try:
        return GbdtModel(
            learner_kind=doc["learner_kind"],
            label_names=tuple(doc["label_names"]),
            feature_names=tuple(doc["feature_names"]),
            base_score=np.array(doc["base_score"], dtype=np.float64),
            hyperparams=Hyperparams(**doc["hyperparams"]),
            trees=[[Tree.from_nested(t) for t in rnd] for rnd in doc["trees"]],
            bundles=BundleMap.from_dict(doc["bundles"]) if doc["bundles"] is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from None


def model_size_bytes(model: GbdtModel) -> int:
    return len(serialize(model))


def class_prior_scores(labels, n_classes: int) -> np.ndarray:
    prior = np.bincount(labels, minlength=n_classes) / len(labels)
    return np.log(np.maximum(prior, MIN_PRIOR))


def train(table: DataTable, hp: Hyperparams, kind: str = EXACT, seed: int = 0, track_loss: bool = False) -> GbdtModel:
    """Fit one regression tree per class per boosting round on softmax gradients.

    ``kind`` selects the split finder: an exhaustive scan over sorted values,
    or quantile histograms built on GOSS-sampled rows with EFB-bundled
    storage.
    """
    if kind not in LEARNER_KINDS:
        raise ValueError(f"unknown learner kind {kind!r}")
    X, y = table.features, table.labels
    C = table.n_classes
    if X.shape[0] < 2 or C < 2 or np.unique(y).size < 2:
        raise DataError("training needs at least two rows and two distinct classes")
    base = class_prior_scores(y, C)
    model = GbdtModel(kind, table.label_names, table.feature_names, base, hp)
    scores = np.tile(base, (X.shape[0], 1))
    all_rows = np.arange(X.shape[0])
    lam, gamma, mch = hp.lambda_l2, hp.gamma, hp.min_child_hessian

    if kind == EXACT:
        def finder(idx, gi, hi):
            return best_split_exact(X, idx, gi, hi, lam, gamma, mch)
    else:
        mapper = BinMapper.fit(X, hp.histogram_bins)
        model.bundles = efb_bundle(X, hp.efb_conflict_max)
        bins = BundledBins(mapper.transform(X), mapper.n_bins, mapper.default_bins(), model.bundles)

        def finder(idx, gi, hi):
            return best_split_histogram(bins, mapper.edges, idx, gi, hi, lam, gamma, mch)

    rng = np.random.default_rng(seed)
    if track_loss:
        model.train_loss.append(log_loss(y, scores))
    for _ in range(hp.n_estimators):
        g, h = softmax_gradients(y, scores)
        rows = all_rows
        if kind == HISTOGRAM:
            sample = goss_sample(np.linalg.norm(g, axis=1), hp.goss_a, hp.goss_b, rng)
            rows = sample.indices
            w = np.zeros(X.shape[0])
            w[rows] = sample.weights
            g = g * w[:, None]
            h = h * w[:, None]
        round_trees = []
        for c in range(C):
            tree = grow_tree(X, rows, g[:, c], h[:, c], hp.max_depth, lam, finder)
            scores[:, c] += hp.learning_rate * tree.predict(X)
            round_trees.append(tree)
        model.trees.append(round_trees)
        if track_loss:
            model.train_loss.append(log_loss(y, scores))
    model._compiled = None
    return model


def predict_proba(model: GbdtModel, rows) -> np.ndarray:
    return model.predict_proba(rows)
