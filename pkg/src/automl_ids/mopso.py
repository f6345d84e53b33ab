"""Multi-objective particle swarm optimisation with a crowding-pruned Pareto archive.

The engine is problem-agnostic. A :class:`Problem` turns a real-valued
position into a candidate solution (``decode``) and scores a batch of
solutions (``evaluate``). Binary problems decode through :func:`binarize`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

MAXIMIZE = "maximize"
MINIMIZE = "minimize"


class StepError(RuntimeError):
    """A fitness evaluation failed; ``particle`` is the offending index."""

    def __init__(self, particle: int, cause: BaseException):
        super().__init__(f"fitness evaluation failed for particle {particle}: {cause!r}")
        self.particle = particle
        self.__cause__ = cause


@dataclass(frozen=True)
class ObjectiveSpec:
    directions: tuple[str, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.directions:
            raise ValueError("at least one objective is required")
        for d in self.directions:
            if d not in (MAXIMIZE, MINIMIZE):
                raise ValueError(f"unknown direction {d!r}")
        if self.weights is not None:
            if len(self.weights) != len(self.directions) or min(self.weights) < 0 or sum(self.weights) <= 0:
                raise ValueError("weights must be non-negative, one per objective, not all zero")

    @property
    def n_objectives(self) -> int:
        return len(self.directions)

    @property
    def signs(self) -> np.ndarray:
        return np.array([1.0 if d == MAXIMIZE else -1.0 for d in self.directions])

    @property
    def normalized_weights(self) -> np.ndarray:
        w = np.ones(self.n_objectives) if self.weights is None else np.asarray(self.weights, float)
        return w / w.sum()

    def scalar(self, fitness) -> float:
        """Weighted sum of direction-adjusted objectives (larger is better)."""
        return float(np.dot(self.normalized_weights, self.signs * np.asarray(fitness, float)))


@dataclass
class SwarmConfig:
    lower: np.ndarray
    upper: np.ndarray
    n_particles: int = 30
    iterations: int = 50
    w: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    v_max_fraction: float = 0.2
    archive_capacity: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if np.any(self.upper < self.lower):
            raise ValueError("upper bound below lower bound")
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (0.0 < self.v_max_fraction <= 1.0):
            raise ValueError("v_max_fraction must be in (0, 1]")
        if self.archive_capacity < 1:
            raise ValueError("archive_capacity must be >= 1")

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def v_max(self) -> np.ndarray:
        return self.v_max_fraction * (self.upper - self.lower)


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    rng: np.random.Generator
    best_position: np.ndarray | None = None
    best_fitness: np.ndarray | None = None
    solution: Any = None
    fitness: np.ndarray | None = None


@dataclass
class ArchiveEntry:
    position: np.ndarray
    fitness: np.ndarray
    solution: Any = None


@dataclass
class Swarm:
    particles: list[Particle]
    rng: np.random.Generator
    iteration: int = 0


def dominates(a, b, spec: ObjectiveSpec) -> bool:
    """True iff ``a`` is no worse than ``b`` on every objective and strictly better on one."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size != spec.n_objectives:
        raise ValueError(f"fitness length mismatch: {a.shape} vs {b.shape}")
    s = spec.signs
    return bool(np.all(s * a >= s * b) and np.any(s * a > s * b))


def crowding_distance(fitness: np.ndarray) -> np.ndarray:
    """NSGA-II crowding distance; boundary points get +inf."""
    f = np.atleast_2d(np.asarray(fitness, dtype=np.float64))
    n, m = f.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(f[:, j], kind="stable")
        col = f[order, j]
        span = col[-1] - col[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


class Archive:
    """Bounded set of mutually non-dominated entries."""

    def __init__(self, capacity: int, spec: ObjectiveSpec):
        self.capacity = capacity
        self.spec = spec
        self.entries: list[ArchiveEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def fitness_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, self.spec.n_objectives))
        return np.array([e.fitness for e in self.entries])

    def update(self, entry: ArchiveEntry) -> bool:
        """Insert ``entry`` unless it is dominated or duplicates an existing fitness vector.

        Entries the candidate dominates are dropped; when over capacity the
        most crowded entry is evicted. Returns whether the candidate was kept.
        """
        fit = np.asarray(entry.fitness, dtype=np.float64)
        keep = []
        for e in self.entries:
            if dominates(e.fitness, fit, self.spec) or np.array_equal(e.fitness, fit):
                return False
            if not dominates(fit, e.fitness, self.spec):
                keep.append(e)
        keep.append(ArchiveEntry(np.array(entry.position, dtype=np.float64), fit, entry.solution))
        self.entries = keep
        inserted = True
        while len(self.entries) > self.capacity:
            crowd = crowding_distance(self.fitness_matrix)
            victim = int(np.argmin(crowd))
            if victim == len(self.entries) - 1:
                inserted = False
            del self.entries[victim]
        return inserted

    def is_mutually_non_dominated(self) -> bool:
        for i, a in enumerate(self.entries):
            for j, b in enumerate(self.entries):
                if i != j and dominates(a.fitness, b.fitness, self.spec):
                    return False
        return True


def update_archive(archive: Archive, candidate: ArchiveEntry, spec: ObjectiveSpec | None = None) -> Archive:
    if spec is not None and spec != archive.spec:
        raise ValueError("archive was built for a different objective spec")
    archive.update(candidate)
    return archive


class Problem:
    """Override ``fitness`` (or ``evaluate`` for batch/parallel scoring)."""

    def initial_position(self, config: SwarmConfig, rng: np.random.Generator, index: int) -> np.ndarray:
        return config.lower + rng.random(config.dim) * (config.upper - config.lower)

    def decode(self, position: np.ndarray, rng: np.random.Generator) -> Any:
        return position

    def fitness(self, solution: Any) -> Sequence[float]:
        raise NotImplementedError

    def evaluate(self, solutions: list[Any]) -> list[np.ndarray]:
        out = []
        for i, s in enumerate(solutions):
            try:
                out.append(np.asarray(self.fitness(s), dtype=np.float64))
            except Exception as exc:  # noqa: BLE001 - re-raised with particle index
                raise StepError(i, exc) from exc
        return out


class FunctionProblem(Problem):
    def __init__(self, fn: Callable[[np.ndarray], Sequence[float]]):
        self.fn = fn

    def fitness(self, solution):
        return np.atleast_1d(self.fn(solution))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def binarize(position, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli draw per dimension with probability sigmoid(position)."""
    position = np.asarray(position, dtype=np.float64)
    return rng.random(position.shape) < sigmoid(position)


def _spawn_rngs(seed: int, n: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    children = np.random.SeedSequence(seed).spawn(n + 1)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]


def init_swarm(config: SwarmConfig, problem: Problem | None = None) -> Swarm:
    problem = problem or Problem()
    swarm_rng, rngs = _spawn_rngs(config.seed, config.n_particles)
    vmax = config.v_max
    particles = []
    for i, rng in enumerate(rngs):
        pos = np.clip(problem.initial_position(config, rng, i), config.lower, config.upper)
        vel = (2.0 * rng.random(config.dim) - 1.0) * vmax
        particles.append(Particle(pos, vel, rng))
    return Swarm(particles, swarm_rng)


def _select_leaders(archive: Archive, rng: np.random.Generator, n: int) -> list[np.ndarray]:
    """Binary tournament on crowding distance, one leader per particle."""
    crowd = crowding_distance(archive.fitness_matrix)
    size = len(archive)
    leaders = []
    for _ in range(n):
        a, b = rng.integers(0, size, size=2)
        pick = a if crowd[a] >= crowd[b] else b
        leaders.append(archive.entries[int(pick)].position)
    return leaders


def _evaluate_and_record(swarm: Swarm, archive: Archive, spec: ObjectiveSpec, problem: Problem) -> list[np.ndarray]:
    solutions = [problem.decode(p.position, p.rng) for p in swarm.particles]
    fits = problem.evaluate(solutions)
    for p, sol, fit in zip(swarm.particles, solutions, fits):
        fit = np.asarray(fit, dtype=np.float64)
        p.solution = sol
        p.fitness = fit
        if p.best_fitness is None or dominates(fit, p.best_fitness, spec) or (
            not dominates(p.best_fitness, fit, spec) and spec.scalar(fit) > spec.scalar(p.best_fitness)
        ):
            p.best_position = p.position.copy()
            p.best_fitness = fit
        archive.update(ArchiveEntry(p.position, fit, sol))
    return fits


def step(swarm: Swarm, archive: Archive, config: SwarmConfig, spec: ObjectiveSpec, problem: Problem) -> Swarm:
    """Move every particle once, evaluate, and refresh personal bests and the archive.

    Archive updates are applied in particle-index order so a run is a pure
    function of the seed even when ``problem.evaluate`` works concurrently.
    """
    leaders = _select_leaders(archive, swarm.rng, len(swarm.particles))
    vmax = config.v_max
    for p, g in zip(swarm.particles, leaders):
        r1 = p.rng.random(config.dim)
        r2 = p.rng.random(config.dim)
        v = config.w * p.velocity + config.c1 * r1 * (p.best_position - p.position) + config.c2 * r2 * (g - p.position)
        p.velocity = np.clip(v, -vmax, vmax)
        p.position = np.clip(p.position + p.velocity, config.lower, config.upper)
    _evaluate_and_record(swarm, archive, spec, problem)
    swarm.iteration += 1
    return swarm


def select_final(archive: Archive, spec: ObjectiveSpec | None = None) -> ArchiveEntry:
    """Archive entry with the best equal-weight sum of min-max normalised, direction-adjusted objectives.

    Exact score ties go to the lexicographically largest direction-adjusted
    fitness vector.
    """
    if len(archive) == 0:
        raise ValueError("cannot select from an empty archive")
    spec = spec or archive.spec
    adj = archive.fitness_matrix * spec.signs
    lo, hi = adj.min(axis=0), adj.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    norm = np.where(hi > lo, (adj - lo) / span, 0.0)
    score = norm @ spec.normalized_weights
    best = score.max()
    tied = [i for i in range(len(archive)) if score[i] == best]
    winner = max(tied, key=lambda i: tuple(adj[i]))
    return archive.entries[winner]


@dataclass
class MopsoResult:
    archive: Archive
    swarm: Swarm
    history: list[np.ndarray] = field(default_factory=list)


def run_mopso(
    problem: Problem,
    config: SwarmConfig,
    spec: ObjectiveSpec,
    on_iteration: Callable[[int, Swarm], None] | None = None,
) -> MopsoResult:
    """Initialise a swarm, then perform ``config.iterations`` steps.

    ``history[i]`` holds the archive fitness matrix after iteration ``i``
    (iteration 0 is the initial swarm).
    """
    swarm = init_swarm(config, problem)
    archive = Archive(config.archive_capacity, spec)
    _evaluate_and_record(swarm, archive, spec, problem)
    history = [archive.fitness_matrix.copy()]
    if on_iteration:
        on_iteration(0, swarm)
    for _ in range(config.iterations):
        step(swarm, archive, config, spec, problem)
        history.append(archive.fitness_matrix.copy())
        if on_iteration:
            on_iteration(swarm.iteration, swarm)
    return MopsoResult(archive, swarm, history)


def write_trace(history: list[np.ndarray], path, objective_names: Sequence[str]) -> None:
    """Per-iteration archive fitness vectors as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "entry", *objective_names])
        for it, fits in enumerate(history):
            for e, row in enumerate(fits):
                w.writerow([it, e, *(repr(float(v)) for v in row)])
