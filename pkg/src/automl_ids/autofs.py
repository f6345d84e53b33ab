"""Importance/percentage feature selection on top of the binary MOPSO engine."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DataError, DataTable
from .feature_scoring import FeatureImportance
from .mopso import (
    MAXIMIZE,
    MINIMIZE,
    Archive,
    MopsoResult,
    ObjectiveSpec,
    Problem,
    SwarmConfig,
    binarize,
    run_mopso,
    select_final,
)

OBJECTIVES = ("score_importance", "score_percentage")
AUTOFS_SPEC = ObjectiveSpec((MAXIMIZE, MINIMIZE))
POSITION_BOUND = 6.0
MASK_FORMAT = "automl-ids/feature-mask/v1"


@dataclass(frozen=True)
class FeatureMask:
    bits: tuple[bool, ...]

    @classmethod
    def from_array(cls, bits) -> "FeatureMask":
        return cls(tuple(bool(b) for b in np.asarray(bits).ravel()))

    @property
    def selected_count(self) -> int:
        return sum(self.bits)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.array)

    def __len__(self) -> int:
        return len(self.bits)


def repair_mask(bits, importance: FeatureImportance) -> np.ndarray:
    """Force the single most important feature on when nothing is selected."""
    bits = np.asarray(bits, dtype=bool).copy()
    if not bits.any():
        bits[int(importance.ranking()[0])] = True
    return bits


def autofs_fitness(mask: FeatureMask, importance: FeatureImportance) -> np.ndarray:
    """(accumulated normalised importance, fraction of features kept)."""
    bits = mask.array
    if bits.size != importance.normalized.size:
        raise ValueError("mask and importance lengths differ")
    score_importance = float(importance.normalized[bits].sum())
    score_percentage = bits.sum() / bits.size
    return np.array([min(score_importance, 1.0), score_percentage])


class _MaskProblem(Problem):
    def __init__(self, importance: FeatureImportance):
        self.importance = importance

    def initial_position(self, config, rng, index):
        # spread starting inclusion rates over (0, 1) so sparse and dense masks are both sampled
        density = (index + 0.5) / config.n_particles
        centre = np.log(density / (1.0 - density))
        return centre + rng.uniform(-1.0, 1.0, config.dim)

    def decode(self, position, rng):
        return FeatureMask.from_array(repair_mask(binarize(position, rng), self.importance))

    def fitness(self, solution: FeatureMask):
        return autofs_fitness(solution, self.importance)


def autofs_swarm_config(n_features: int, **overrides) -> SwarmConfig:
    bounds = dict(lower=np.full(n_features, -POSITION_BOUND), upper=np.full(n_features, POSITION_BOUND))
    bounds.update(overrides)
    return SwarmConfig(**bounds)


@dataclass
class AutoFSResult:
    mask: FeatureMask
    fitness: np.ndarray
    archive: Archive
    history: list[np.ndarray]


def run_oip_autofs(
    table: DataTable | None,
    importance: FeatureImportance,
    config: SwarmConfig | None = None,
    spec: ObjectiveSpec = AUTOFS_SPEC,
) -> AutoFSResult:
    """Search feature masks trading accumulated importance against the share of features kept.

    Only the importance scores drive the search; ``table`` is used to check
    the schema when given.
    """
    n = importance.normalized.size
    if table is not None and tuple(table.feature_names) != tuple(importance.feature_names):
        raise DataError("importance scores do not match the table's features")
    if n < 2:
        raise DataError("feature selection needs at least two features")
    config = config or autofs_swarm_config(n)
    if config.dim != n:
        raise ValueError(f"swarm dimension {config.dim} != feature count {n}")
    result: MopsoResult = run_mopso(_MaskProblem(importance), config, spec)
    best = select_final(result.archive, spec)
    return AutoFSResult(best.solution, best.fitness, result.archive, result.history)


def apply_mask(table: DataTable, mask: FeatureMask) -> DataTable:
    if len(mask) != table.n_features:
        raise DataError(f"mask has {len(mask)} bits, table has {table.n_features} features")
    idx = mask.indices
    return table.with_features(table.features[:, idx], tuple(table.feature_names[i] for i in idx))


def mask_to_dict(mask: FeatureMask, feature_names) -> dict:
    return {
        "format": MASK_FORMAT,
        "feature_names": list(feature_names),
        "bits": [int(b) for b in mask.bits],
        "selected": [n for n, b in zip(feature_names, mask.bits) if b],
    }


def mask_from_dict(doc: dict) -> tuple[FeatureMask, tuple[str, ...]]:
    if doc.get("format") != MASK_FORMAT:
        raise DataError(f"not a feature mask: {doc.get('format')!r}")
    return FeatureMask.from_array(doc["bits"]), tuple(doc["feature_names"])


def write_selection_report(mask: FeatureMask, importance: FeatureImportance, path) -> None:
    """Selected features with normalised importance and overall rank (1 = most important)."""
    rank = np.empty(importance.normalized.size, dtype=np.int64)
    rank[importance.ranking()] = np.arange(1, rank.size + 1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "normalized_importance", "rank"])
        for i in sorted(mask.indices, key=lambda i: rank[i]):
            w.writerow([importance.feature_names[i], repr(float(importance.normalized[i])), int(rank[i])])


def dumps_mask(mask: FeatureMask, feature_names) -> str:
    return json.dumps(mask_to_dict(mask, feature_names), indent=2)
