"""Per-feature normalization chosen by a Shapiro-Wilk normality test."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..dataset import DataError, DataTable
from .shapiro import shapiro_wilk

Z_SCORE = "z_score"
MIN_MAX = "min_max"
CONSTANT = "constant"
PLAN_FORMAT = "automl-ids/normalization-plan/v1"


@dataclass(frozen=True)
class FeatureScaling:
    name: str
    method: str
    mu: float
    sigma: float
    min: float
    max: float
    sw_p_value: float


@dataclass(frozen=True)
class NormalizationPlan:
    features: tuple[FeatureScaling, ...]
    alpha: float = 0.05

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def methods(self) -> list[str]:
        return [f.method for f in self.features]

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != len(self.features):
            raise DataError(
                f"plan covers {len(self.features)} features, data has shape {matrix.shape}"
            )
        out = np.empty_like(matrix)
        for j, f in enumerate(self.features):
            col = matrix[:, j]
            if f.method == Z_SCORE:
                out[:, j] = (col - f.mu) / f.sigma
            elif f.method == MIN_MAX:
                out[:, j] = (col - f.min) / (f.max - f.min)
            else:
                out[:, j] = 0.0
        return out

    def to_dict(self) -> dict:
        return {
            "format": PLAN_FORMAT,
            "alpha": self.alpha,
            "features": [asdict(f) for f in self.features],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizationPlan":
        if doc.get("format") != PLAN_FORMAT:
            raise DataError(f"not a normalization plan: {doc.get('format')!r}")
        return cls(tuple(FeatureScaling(**f) for f in doc["features"]), doc["alpha"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def fit_normalization(train: DataTable, seed: int = 0, alpha: float = 0.05) -> NormalizationPlan:
    """Pick z-score for features whose Shapiro-Wilk p-value exceeds ``alpha``, min-max otherwise.

    All statistics come from ``train`` only; sigma is the population standard
    deviation.
    """
    if train.n_rows == 0:
        raise DataError("cannot fit normalization on an empty table")
    out = []
    for j, name in enumerate(train.feature_names):
        col = train.features[:, j]
        lo, hi = float(col.min()), float(col.max())
        mu, sigma = float(col.mean()), float(col.std())
        if hi == lo:
            out.append(FeatureScaling(name, CONSTANT, mu, 0.0, lo, hi, 0.0))
            continue
        p = shapiro_wilk(col, seed=seed + j).p_value if col.size >= 3 else 0.0
        method = Z_SCORE if (p > alpha and sigma > 0) else MIN_MAX
        out.append(FeatureScaling(name, method, mu, sigma, lo, hi, float(p)))
    return NormalizationPlan(tuple(out), alpha)


def apply_normalization(plan: NormalizationPlan, table: DataTable) -> DataTable:
    if tuple(table.feature_names) != plan.feature_names:
        raise DataError("table columns do not match the normalization plan")
    return table.with_features(plan.transform(table.features))
