"""Joint learner-kind and hyperparameter search scored on accuracy, confidence and latency."""
from __future__ import annotations

import csv
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .dataset import DataTable, FoldAssignment, kfold_indices
from .evaluation import classification_metrics, confidence_metrics, time_inference
from .gbdt import EXACT, HISTOGRAM, LEARNER_KINDS, GbdtModel, Hyperparams, train
from .mopso import MAXIMIZE, MINIMIZE, Archive, ObjectiveSpec, Problem, SwarmConfig, run_mopso, select_final

CASH_SPEC = ObjectiveSpec((MAXIMIZE, MAXIMIZE, MINIMIZE))
CHOICE_FORMAT = "automl-ids/cash-choice/v1"
CATEGORICAL, INTEGER, REAL = "categorical", "integer", "real"
LINEAR, LOG = "linear", "log"

# "model": latency objective = mean internal-node visits per row (deterministic);
# "wallclock": median measured seconds per row.
LATENCY_MODES = ("model", "wallclock")

# timed passes of concurrent candidates must not overlap
_TIMING_LOCK = threading.Lock()
_HP_FIELDS = {f.name for f in fields(Hyperparams)}


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    low: float = 0.0
    high: float = 0.0
    scale: str = LINEAR
    choices: tuple = ()

    def __post_init__(self) -> None:
        if self.kind == CATEGORICAL:
            if not self.choices:
                raise ValueError(f"{self.name}: categorical dimension needs at least one choice")
            return
        if self.kind not in (INTEGER, REAL):
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")
        if not (math.isfinite(self.low) and math.isfinite(self.high)) or self.high < self.low:
            raise ValueError(f"{self.name}: empty range [{self.low}, {self.high}]")
        if self.scale not in (LINEAR, LOG):
            raise ValueError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == LOG and self.low <= 0:
            raise ValueError(f"{self.name}: log scale needs a positive lower bound")

    def decode(self, u: float):
        u = min(max(float(u), 0.0), 1.0)
        if self.kind == CATEGORICAL:
            return self.choices[min(int(math.floor(u * len(self.choices))), len(self.choices) - 1)]
        if self.scale == LOG:
            x = math.exp(math.log(self.low) + u * (math.log(self.high) - math.log(self.low)))
        else:
            x = self.low + u * (self.high - self.low)
        x = min(max(x, self.low), self.high)
        if self.kind == INTEGER:
            return int(min(max(math.floor(x + 0.5), math.ceil(self.low)), math.floor(self.high)))
        return float(x)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["choices"] = list(self.choices)
        return d


@dataclass(frozen=True)
class SearchSpace:
    """Ordered dimensions; every particle coordinate lives in [0, 1].

    A dimension named ``learner_kind`` picks the learner; every other name
    must be a ``Hyperparams`` field. Fields not searched come from ``base``.
    """

    dimensions: tuple[Dimension, ...]
    base: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self) -> None:
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")
        for d in self.dimensions:
            if d.name == "learner_kind":
                if d.kind != CATEGORICAL or any(c not in LEARNER_KINDS for c in d.choices):
                    raise ValueError("learner_kind must be categorical over known learner kinds")
            elif d.name not in _HP_FIELDS:
                raise ValueError(f"unknown hyperparameter {d.name!r}")

    @classmethod
    def default(cls, base: Hyperparams | None = None) -> "SearchSpace":
        return cls((
            Dimension("learner_kind", CATEGORICAL, choices=(EXACT, HISTOGRAM)),
            Dimension("n_estimators", INTEGER, 10, 300),
            Dimension("learning_rate", REAL, 0.01, 0.5, LOG),
            Dimension("max_depth", INTEGER, 2, 12),
            Dimension("lambda_l2", REAL, 0.0, 10.0),
        ), base or Hyperparams())

    @classmethod
    def single(cls, config: "CandidateConfig", names: Sequence[str] = ("n_estimators", "learning_rate", "max_depth", "lambda_l2")) -> "SearchSpace":
        """A space whose only member is ``config``."""
        dims = [Dimension("learner_kind", CATEGORICAL, choices=(config.learner_kind,))]
        for n in names:
            v = getattr(config.hyperparams, n)
            dims.append(Dimension(n, INTEGER if isinstance(v, int) else REAL, v, v))
        return cls(tuple(dims), config.hyperparams)

    def with_ranges(self, **ranges) -> "SearchSpace":
        """Replace (low, high) of named numeric dimensions, or choices of categorical ones."""
        dims = []
        for d in self.dimensions:
            if d.name in ranges:
                r = ranges[d.name]
                d = Dimension(d.name, d.kind, choices=tuple(r)) if d.kind == CATEGORICAL else Dimension(d.name, d.kind, r[0], r[1], d.scale)
            dims.append(d)
        unknown = set(ranges) - {d.name for d in self.dimensions}
        if unknown:
            raise ValueError(f"unknown dimensions {sorted(unknown)}")
        return SearchSpace(tuple(dims), self.base)

    def __len__(self) -> int:
        return len(self.dimensions)

    def to_dict(self) -> dict:
        return {"dimensions": [d.to_dict() for d in self.dimensions], "base": asdict(self.base)}


@dataclass(frozen=True)
class CandidateConfig:
    learner_kind: str
    hyperparams: Hyperparams

    def key(self) -> tuple:
        return (self.learner_kind, *astuple_hp(self.hyperparams))

    def to_dict(self) -> dict:
        return {"learner_kind": self.learner_kind, "hyperparams": asdict(self.hyperparams)}

    @classmethod
    def from_dict(cls, doc: dict) -> "CandidateConfig":
        return cls(doc["learner_kind"], Hyperparams(**doc["hyperparams"]))


def astuple_hp(hp: Hyperparams) -> tuple:
    return tuple(getattr(hp, f.name) for f in fields(Hyperparams))


@dataclass(frozen=True)
class FitnessVector:
    """Fold-averaged objectives. ``t_avg`` is in the units of the latency mode."""

    f1_avg: float
    confidence_avg: float
    t_avg: float
    tau_scale: float = 1.0
    t_wall_s: float = 0.0
    failed: bool = False

    @property
    def t_norm(self) -> float:
        if self.failed:
            return 1.0
        return float(1.0 / (1.0 + math.exp(-self.t_avg / self.tau_scale)))

    def with_tau(self, tau_scale: float) -> "FitnessVector":
        return FitnessVector(self.f1_avg, self.confidence_avg, self.t_avg, tau_scale, self.t_wall_s, self.failed)

    def as_array(self) -> np.ndarray:
        return np.array([self.f1_avg, self.confidence_avg, self.t_norm])


WORST = dict(f1_avg=0.0, confidence_avg=0.0, t_avg=0.0, failed=True)


def decode_particle(position, space: SearchSpace) -> CandidateConfig:
    position = np.asarray(position, dtype=np.float64)
    if position.size != len(space):
        raise ValueError(f"position has {position.size} coordinates, space has {len(space)}")
    kind = EXACT
    changes = {}
    for d, u in zip(space.dimensions, position):
        v = d.decode(u)
        if d.name == "learner_kind":
            kind = v
        else:
            changes[d.name] = v
    return CandidateConfig(kind, space.base.with_(**changes))


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


FoldHook = Callable[[int, np.ndarray, np.ndarray], None]


def evaluate_candidate(
    config: CandidateConfig,
    train_table: DataTable,
    folds: FoldAssignment,
    seed: int = 0,
    tau_scale: float = 1.0,
    latency: str = "model",
    on_fold: FoldHook | None = None,
) -> FitnessVector:
    """K-fold weighted F1, mean predicted-class probability and per-row latency.

    A training failure on any fold yields the worst-case vector instead of
    raising.
    """
    if latency not in LATENCY_MODES:
        raise ValueError(f"unknown latency mode {latency!r}")
    f1s, confs, lats, walls = [], [], [], []
    try:
        for f in range(folds.k):
            tr, va = folds.train_rows(f), folds.valid_rows(f)
            if on_fold is not None:
                on_fold(f, tr, va)
            if va.size == 0:
                continue
            model = train(train_table.take(tr), config.hyperparams, config.learner_kind, fold_seed(seed, f))
            Xv, yv = train_table.features[va], train_table.labels[va]
            proba = model.predict_proba(Xv)
            pred = np.argmax(proba, axis=1)
            f1s.append(classification_metrics(yv, pred, train_table.n_classes).f1_weighted)
            confs.append(confidence_metrics(proba, pred, yv)[0])
            with _TIMING_LOCK:
                wall = time_inference(model.predict_proba, Xv)
            walls.append(wall)
            lats.append(model.decision_path_length(Xv) if latency == "model" else wall)
    except Exception:  # noqa: BLE001 - any fold failure degrades this candidate only
        return FitnessVector(**WORST, tau_scale=tau_scale)
    if not f1s:
        return FitnessVector(**WORST, tau_scale=tau_scale)
    return FitnessVector(float(np.mean(f1s)), float(np.mean(confs)), float(np.mean(lats)), tau_scale, float(np.mean(walls)))


def tau_from_initial(vectors: Sequence[FitnessVector]) -> float:
    """Median latency of the successful initial candidates (1.0 if none is positive)."""
    t = [v.t_avg for v in vectors if not v.failed]
    tau = float(np.median(t)) if t else 0.0
    return tau if tau > 0 and math.isfinite(tau) else 1.0


TRACE_COLUMNS = ("iteration", "particle", "learner", "hyperparams", "f1", "confidence", "t_raw_ms", "t_norm")


class CashProblem(Problem):
    def __init__(self, train_table: DataTable, space: SearchSpace, folds: FoldAssignment, seed: int,
                 latency: str = "model", threads: int = 1, on_fold: FoldHook | None = None):
        self.train_table = train_table
        self.space = space
        self.folds = folds
        self.seed = seed
        self.latency = latency
        self.threads = max(1, int(threads))
        self.on_fold = on_fold
        self.tau: float | None = None
        self.cache: dict[tuple, FitnessVector] = {}
        self.trace: list[dict] = []
        self._iteration = 0

    def decode(self, position, rng):
        return decode_particle(position, self.space)

    def _score(self, config: CandidateConfig) -> FitnessVector:
        return evaluate_candidate(config, self.train_table, self.folds, self.seed, 1.0, self.latency, self.on_fold)

    def evaluate(self, solutions: list[Any]) -> list[np.ndarray]:
        todo = []
        for c in solutions:
            if c.key() not in self.cache and c.key() not in {t.key() for t in todo}:
                todo.append(c)
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                scored = list(pool.map(self._score, todo))
        else:
            scored = [self._score(c) for c in todo]
        for c, v in zip(todo, scored):
            self.cache[c.key()] = v
        vectors = [self.cache[c.key()] for c in solutions]
        if self.tau is None:
            self.tau = tau_from_initial(vectors)
        out = []
        for i, (c, v) in enumerate(zip(solutions, vectors)):
            v = v.with_tau(self.tau)
            self.trace.append({
                "iteration": self._iteration,
                "particle": i,
                "learner": c.learner_kind,
                "hyperparams": json.dumps({d.name: getattr(c.hyperparams, d.name) for d in self.space.dimensions if d.name != "learner_kind"}, sort_keys=True),
                "f1": v.f1_avg,
                "confidence": v.confidence_avg,
                "t_raw_ms": v.t_wall_s * 1e3,
                "t_norm": v.t_norm,
            })
            out.append(v.as_array())
        self._iteration += 1
        return out

    def vector(self, config: CandidateConfig) -> FitnessVector:
        return self.cache[config.key()].with_tau(self.tau or 1.0)


def cash_swarm_config(space: SearchSpace, **overrides) -> SwarmConfig:
    return SwarmConfig(np.zeros(len(space)), np.ones(len(space)), **overrides)


@dataclass
class CashResult:
    config: CandidateConfig
    archive: Archive
    model: GbdtModel | None
    fitness: FitnessVector
    tau_scale: float
    trace: list[dict]
    history: list[np.ndarray]

    def __iter__(self):
        return iter((self.config, self.archive, self.model))


def run_opce_cash(
    train_table: DataTable,
    space: SearchSpace | None = None,
    swarm_config: SwarmConfig | None = None,
    seed: int = 0,
    cv_folds: int = 5,
    latency: str = "model",
    threads: int = 1,
    on_fold: FoldHook | None = None,
    refit: bool = True,
) -> CashResult:
    """Search the space with the swarm, pick the equal-weight compromise and refit it on all rows.

    With ``refit=False`` the returned model is None (the caller trains it).
    """
    space = space or SearchSpace.default()
    swarm_config = swarm_config or cash_swarm_config(space, seed=seed)
    if swarm_config.dim != len(space):
        raise ValueError("swarm dimension does not match the search space")
    folds = kfold_indices(train_table, cv_folds, seed)
    problem = CashProblem(train_table, space, folds, seed, latency, threads, on_fold)
    res = run_mopso(problem, swarm_config, CASH_SPEC)
    best = select_final(res.archive, CASH_SPEC)
    config = best.solution
    model = train(train_table, config.hyperparams, config.learner_kind, seed) if refit else None
    return CashResult(config, res.archive, model, problem.vector(config), problem.tau, problem.trace, res.history)


def write_cash_trace(trace: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in trace:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def choice_to_dict(result: CashResult, latency: str = "model") -> dict:
    f = result.fitness
    return {
        "format": CHOICE_FORMAT,
        "config": result.config.to_dict(),
        "fitness": {"f1_avg": f.f1_avg, "confidence_avg": f.confidence_avg, "t_avg": f.t_avg, "t_norm": f.t_norm},
        "tau_scale": result.tau_scale,
        "latency_mode": latency,
        "archive": [
            {"config": e.solution.to_dict(), "fitness": [float(v) for v in e.fitness]} for e in result.archive
        ],
    }
