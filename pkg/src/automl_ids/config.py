"""Pipeline settings: defaults, key=value files and overrides."""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .gbdt import EXACT, HISTOGRAM, Hyperparams
from .opce_cash import LATENCY_MODES, SearchSpace

CONFIG_FORMAT = "automl-ids/pipeline-config/v1"

# excluded from the digest: they change where and how fast, not what
_NON_SEMANTIC = ("out", "threads")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = ""
    label_column: str = "Label"
    sample_fraction: float = 1.0
    test_fraction: float = 0.2
    cv_folds: int = 5
    seed: int = 0
    threads: int = 1
    out: str = "out"

    sw_alpha: float = 0.05
    k_neighbors: int = 5
    smote_ratio: float = 0.5
    ig_bins: int = 10

    autofs_particles: int = 30
    autofs_iterations: int = 50
    cash_particles: int = 30
    cash_iterations: int = 50
    swarm_w: float = 0.7
    swarm_c1: float = 1.5
    swarm_c2: float = 1.5
    v_max_fraction: float = 0.2
    archive_capacity: int = 50

    learners: tuple[str, ...] = (EXACT, HISTOGRAM)
    n_estimators_range: tuple[int, int] = (10, 300)
    learning_rate_range: tuple[float, float] = (0.01, 0.5)
    max_depth_range: tuple[int, int] = (2, 12)
    lambda_l2_range: tuple[float, float] = (0.0, 10.0)
    latency_mode: str = "model"

    def __post_init__(self) -> None:
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ConfigError("sample_fraction must be in (0, 1]")
        if not (0.0 < self.test_fraction < 1.0):
            raise ConfigError("test_fraction must be in (0, 1)")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.latency_mode not in LATENCY_MODES:
            raise ConfigError(f"latency_mode must be one of {LATENCY_MODES}")
        if not self.learners:
            raise ConfigError("learners must name at least one learner kind")

    def search_space(self) -> SearchSpace:
        try:
            return SearchSpace.default(Hyperparams()).with_ranges(
                learner_kind=self.learners,
                n_estimators=self.n_estimators_range,
                learning_rate=self.learning_rate_range,
                max_depth=self.max_depth_range,
                lambda_l2=self.lambda_l2_range,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def swarm_settings(self, stage: str) -> dict:
        return dict(
            n_particles=getattr(self, f"{stage}_particles"),
            iterations=getattr(self, f"{stage}_iterations"),
            w=self.swarm_w, c1=self.swarm_c1, c2=self.swarm_c2,
            v_max_fraction=self.v_max_fraction,
            archive_capacity=self.archive_capacity,
            seed=self.stage_seed(stage),
        )

    def stage_seed(self, stage: str) -> int:
        return int(np.random.SeedSequence([self.seed, zlib.crc32(stage.encode())]).generate_state(1)[0])

    def to_dict(self) -> dict:
        doc = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}
        doc["format"] = CONFIG_FORMAT
        return doc

    def digest(self) -> str:
        doc = {k: v for k, v in self.to_dict().items() if k not in _NON_SEMANTIC}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, overrides: dict[str, str]) -> "PipelineConfig":
        return replace(self, **{k: _coerce(k, v) for k, v in overrides.items()})


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, raw):
    if key not in _TYPES:
        raise ConfigError(f"unknown setting {key!r}")
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    t = _TYPES[key]
    raw = raw.strip()
    try:
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        if t == "str":
            return raw
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if t == "tuple[str, ...]":
            return tuple(parts)
        cast = int if "int" in t else float
        if len(parts) != 2:
            raise ValueError("expected low,high")
        return (cast(parts[0]), cast(parts[1]))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def parse_assignments(lines) -> dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def load_config(path=None, overrides: dict[str, str] | None = None, base: dict | None = None) -> PipelineConfig:
    """Defaults, then ``base`` (a stored config document), then the file (if any), then ``overrides``; later wins."""
    settings: dict = {k: v for k, v in (base or {}).items() if k != "format"}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        settings.update(parse_assignments(p.read_text(encoding="utf-8").splitlines()))
    settings.update(overrides or {})
    return PipelineConfig().with_overrides(settings)


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = {k: v for k, v in doc.items() if k != "format"}
    return PipelineConfig().with_overrides(doc)
