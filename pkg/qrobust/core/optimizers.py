"""Evolutionary optimizers maximising averaged fitness.

* ``msms_de`` -- mixed-strategy DE: per individual a normally sampled F, a
  strategy picked uniformly from the pool by a quartile rule, a normally
  sampled CR, and fitness averaged over the uncertainty grid.
* ``ms_de``   -- the same engine with DE/rand/1/bin and fixed F, CR.
* ``de1``     -- ``ms_de`` on the nominal sample only.
* ``ga``      -- real-coded GA baseline (tournament, uniform crossover,
  Gaussian mutation, elitism).

All random decisions are drawn in one fixed order from a single
``numpy.random.Generator`` in the calling thread. Fitness evaluation happens
afterwards and may be spread over threads without touching the stream.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from qrobust.logging import get_logger
from qrobust.models import STRATEGY_COUNT, RunHistory

if TYPE_CHECKING:
    from qrobust.core.problems import RobustControlProblem, UncertaintySampleGrid

logger = get_logger(__name__)

ALGORITHMS = ("msms_de", "ms_de", "de1", "ga")
MIN_POPULATION = 5

# distinct non-self indices each mutation strategy needs
STRATEGY_INDEX_DEMAND = {1: 3, 2: 4, 3: 5, 4: 3}
STRATEGY_NAMES = {
    1: "DE/rand/1",
    2: "DE/rand-to-best/2",
    3: "DE/rand/2",
    4: "DE/current-to-rand/1",
}

GenerationCallback = Callable[[RunHistory, "Population"], None]


class EvaluationError(RuntimeError):
    """Fitness evaluation raised or returned a non-finite value."""

    def __init__(self, message: str, genome: np.ndarray | None = None):
        super().__init__(message)
        self.genome = genome


class InvariantError(RuntimeError):
    """An optimizer invariant (elitist monotonicity, bounds closure) broke."""


# ---------------------------------------------------------------------------
# Configuration and population
# ---------------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    """Search parameters shared by every algorithm."""

    algorithm: str = "msms_de"
    population_size: int = 50
    max_generations: int = 2000

    # fixed parameters (ms_de, de1)
    F: float = 0.9
    CR: float = 0.1

    # sampled parameters (msms_de); std 0 means "use the mean, draw nothing"
    F_mean: float = 0.5
    F_std: float = 0.3
    CR_mean: float = 0.5
    CR_std: float = 0.1
    K: float = 0.5
    strategies: tuple[int, ...] = (1, 2, 3, 4)

    # GA
    crossover_probability: float = 0.8
    mutation_probability: float = 0.05
    mutation_scale: float = 0.05
    tournament_size: int = 2
    elitism: int = 1

    log_every: int = 100

    def validate(self, dim: int) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"Unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if dim < 1:
            raise ValueError(f"Genome dimension must be >= 1, got {dim}")
        if self.population_size < MIN_POPULATION:
            raise ValueError(
                f"population_size must be >= {MIN_POPULATION}, got {self.population_size}"
            )
        if self.max_generations < 0:
            raise ValueError(f"max_generations must be >= 0, got {self.max_generations}")
        pool = self.active_strategies()
        if not pool:
            raise ValueError("Strategy pool is empty")
        for s in pool:
            if s not in STRATEGY_INDEX_DEMAND:
                raise ValueError(f"Unknown mutation strategy {s}; expected 1-4")
            if self.algorithm != "ga" and self.population_size - 1 < STRATEGY_INDEX_DEMAND[s]:
                raise ValueError(
                    f"Strategy {s} ({STRATEGY_NAMES[s]}) needs {STRATEGY_INDEX_DEMAND[s]} distinct "
                    f"partners; population_size {self.population_size} is too small"
                )
        if self.algorithm == "ga":
            if not 1 <= self.elitism < self.population_size:
                raise ValueError(f"elitism must lie in [1, population_size), got {self.elitism}")
            if self.tournament_size < 1:
                raise ValueError(f"tournament_size must be >= 1, got {self.tournament_size}")
        if self.CR_std == 0 and not 0.0 <= self.CR_mean <= 1.0:
            raise ValueError(f"Constant CR must lie in [0, 1], got {self.CR_mean}")
        if not 0.0 <= self.CR <= 1.0:
            raise ValueError(f"CR must lie in [0, 1], got {self.CR}")

    def active_strategies(self) -> tuple[int, ...]:
        if self.algorithm == "msms_de":
            return tuple(self.strategies)
        return (1,)


@dataclass
class Population:
    """Genomes with their cached averaged fitness."""

    genomes: np.ndarray                     # (NP, D)
    fitness: np.ndarray = field(default_factory=lambda: np.zeros(0))
    generation: int = 0

    @property
    def size(self) -> int:
        return self.genomes.shape[0]

    @property
    def best_index(self) -> int:
        """Index of the maximal fitness; the lowest index wins ties."""
        return int(np.argmax(self.fitness))

    @property
    def best_fitness(self) -> float:
        return float(self.fitness[self.best_index])

    @property
    def best_genome(self) -> np.ndarray:
        return self.genomes[self.best_index].copy()


def initialize(
    dim: int,
    lower: np.ndarray,
    upper: np.ndarray,
    population_size: int,
    rng: np.random.Generator,
) -> Population:
    """``x = x_min + U(0, 1) (x_max - x_min)``, drawn individual-major."""
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (dim,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (dim,))
    genomes = lower + rng.random((population_size, dim)) * (upper - lower)
    return Population(genomes=genomes, fitness=np.full(population_size, -np.inf))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class PopulationEvaluator:
    """Averaged fitness of many genomes, optionally spread over threads.

    Additive-noise variants are drawn first, in the calling thread. The
    flattened variant rows are then split into contiguous chunks and results
    are concatenated in index order.
    """

    def __init__(
        self,
        problem: RobustControlProblem,
        threads: int = 1,
        training_noise: float = 0.0,
        noise_samples: int = 3,
    ):
        self.problem = problem
        self.threads = max(int(threads), 1)
        self.training_noise = float(training_noise)
        self.noise_samples = int(noise_samples)
        self.evaluations = 0

    @property
    def dim(self) -> int:
        return self.problem.dim

    def samples_per_genome(self, grid: UncertaintySampleGrid) -> int:
        variants = self.noise_samples if self.training_noise > 0 else 1
        return variants * len(grid)

    def __call__(
        self,
        genomes: np.ndarray,
        grid: UncertaintySampleGrid,
        rng: np.random.Generator,
    ) -> np.ndarray:
        genomes = np.atleast_2d(genomes)
        count, dim = genomes.shape
        variants = self.problem.training_variants(
            genomes, self.noise_samples, self.training_noise, rng
        )
        rows = variants.reshape(-1, dim)
        try:
            values = self._evaluate_rows(rows, grid.thetas)
        except Exception as exc:
            genome = self._locate_failure(rows, grid.thetas)
            raise EvaluationError(f"Fitness evaluation failed: {exc}", genome=genome) from exc

        values = values.reshape(count, -1)
        finite = np.isfinite(values).all(axis=1)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise EvaluationError(
                f"Non-finite fitness for genome {bad}", genome=genomes[bad].copy()
            )
        self.evaluations += values.size
        return values.mean(axis=1)

    def _evaluate_rows(self, rows: np.ndarray, params: np.ndarray) -> np.ndarray:
        chunks = [c for c in np.array_split(rows, min(self.threads, len(rows))) if len(c)]
        if len(chunks) <= 1:
            return self.problem.sample_fitness(rows, params)
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: self.problem.sample_fitness(c, params), chunks))
        return np.concatenate(parts, axis=0)

    def _locate_failure(self, rows: np.ndarray, params: np.ndarray) -> np.ndarray | None:
        for row in rows:
            try:
                values = self.problem.sample_fitness(row[None], params)
            except Exception:
                return row.copy()
            if not np.isfinite(values).all():
                return row.copy()
        return None


Evaluator = Callable[[np.ndarray, "UncertaintySampleGrid", np.random.Generator], np.ndarray]


# ---------------------------------------------------------------------------
# DE operators
# ---------------------------------------------------------------------------

def sample_F(rng: np.random.Generator, mean: float = 0.5, std: float = 0.3) -> float:
    """Normal draw, accepted even outside the usual range."""
    if std == 0:
        return float(mean)
    return float(rng.normal(mean, std))


def sample_CR(rng: np.random.Generator, mean: float = 0.5, std: float = 0.1) -> float:
    """Normal draw, redrawn until it lies in [0, 1]."""
    if std == 0:
        return float(mean)
    while True:
        cr = float(rng.normal(mean, std))
        if 0.0 <= cr <= 1.0:
            return cr


def select_strategy(pool: Sequence[int], rng: np.random.Generator) -> int:
    """Quartile rule on ``pp ~ U(0, 1)``: ``pp <= 1/k`` picks the first entry, and so on."""
    if len(pool) == 1:
        return pool[0]
    pp = rng.random()
    index = int(np.ceil(pp * len(pool))) - 1
    return pool[min(max(index, 0), len(pool) - 1)]


def distinct_indices(
    population_size: int,
    exclude: int,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``count`` mutually distinct indices from ``{0..NP-1} minus {exclude}`` (partial Fisher-Yates)."""
    pool = np.delete(np.arange(population_size), exclude)
    if count > pool.size:
        raise ValueError(f"Cannot draw {count} distinct partners from {pool.size} candidates")
    for k in range(count):
        j = int(rng.integers(k, pool.size))
        pool[k], pool[j] = pool[j], pool[k]
    return pool[:count].copy()


def mutate(
    strategy: int,
    genomes: np.ndarray,
    i: int,
    F: float,
    rng: np.random.Generator,
    best_index: int | None = None,
    K: float = 0.5,
) -> np.ndarray:
    """Donor vector for individual ``i`` (not yet repaired)."""
    if strategy not in STRATEGY_INDEX_DEMAND:
        raise ValueError(f"Unknown mutation strategy {strategy}")
    r = distinct_indices(genomes.shape[0], i, STRATEGY_INDEX_DEMAND[strategy], rng)
    x = genomes
    if strategy == 1:
        return x[r[0]] + F * (x[r[1]] - x[r[2]])
    if strategy == 2:
        best = x[i if best_index is None else best_index]
        return x[i] + F * (best - x[i]) + F * (x[r[0]] - x[r[1]]) + F * (x[r[2]] - x[r[3]])
    if strategy == 3:
        return x[r[0]] + F * (x[r[1]] - x[r[2]]) + F * (x[r[3]] - x[r[4]])
    return x[i] + K * (x[r[0]] - x[i]) + F * (x[r[1]] - x[r[2]])


def repair_bounds(
    donor: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Re-randomize each out-of-bounds component uniformly within its range."""
    donor = np.array(donor, dtype=float)
    lower = np.broadcast_to(lower, donor.shape)
    upper = np.broadcast_to(upper, donor.shape)
    bad = (donor < lower) | (donor > upper)
    n_bad = int(bad.sum())
    if n_bad:
        donor[bad] = lower[bad] + rng.random(n_bad) * (upper[bad] - lower[bad])
    return donor


def crossover(
    target: np.ndarray,
    donor: np.ndarray,
    CR: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Binomial crossover; component ``j_rand`` always comes from the donor."""
    dim = target.shape[0]
    j_rand = int(rng.integers(dim))
    mask = rng.random(dim) <= CR
    mask[j_rand] = True
    return np.where(mask, donor, target)


def select(
    target: np.ndarray,
    target_fitness: float,
    trial: np.ndarray,
    trial_fitness: float,
) -> tuple[np.ndarray, float]:
    """Greedy selection; the trial wins ties."""
    if trial_fitness >= target_fitness:
        return trial, trial_fitness
    return target, target_fitness


# ---------------------------------------------------------------------------
# Engines
# ---------------------------------------------------------------------------

def _check_bounds(genomes: np.ndarray, lower: np.ndarray, upper: np.ndarray, generation: int) -> None:
    if np.any(genomes < lower) or np.any(genomes > upper):
        raise InvariantError(f"Genome left the search box in generation {generation}")


class _Engine:
    """Generation loop, history bookkeeping and interrupt handling."""

    label = ""

    def __init__(
        self,
        evaluator: Evaluator,
        grid: UncertaintySampleGrid,
        config: OptimizerConfig,
        rng: np.random.Generator,
        lower: np.ndarray,
        upper: np.ndarray,
    ):
        self.evaluator = evaluator
        self.grid = grid
        self.config = config
        self.rng = rng
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.dim = self.lower.size
        config.validate(self.dim)
        self.evaluations = 0

    def _evaluate(self, genomes: np.ndarray) -> np.ndarray:
        values = self.evaluator(genomes, self.grid, self.rng)
        per_genome = getattr(self.evaluator, "samples_per_genome", None)
        samples = per_genome(self.grid) if per_genome is not None else len(self.grid)
        self.evaluations += genomes.shape[0] * samples
        return np.asarray(values, dtype=float)

    def _next_generation(self, population: Population) -> list[int]:
        raise NotImplementedError

    def run(self, on_generation: GenerationCallback | None = None) -> RunHistory:
        cfg = self.config
        history = RunHistory(algorithm=cfg.algorithm)
        start = time.perf_counter()
        logger.info(
            "%s start: NP=%d, D=%d, samples=%d, G_max=%d",
            self.label, cfg.population_size, self.dim, len(self.grid), cfg.max_generations,
        )

        population = initialize(self.dim, self.lower, self.upper, cfg.population_size, self.rng)
        population.fitness = self._evaluate(population.genomes)
        history.best_genome = population.best_genome
        history.record(
            population.best_fitness, population.fitness.mean(), self.evaluations,
            elapsed=time.perf_counter() - start,
        )
        if on_generation is not None:
            on_generation(history, population)

        try:
            for generation in range(1, cfg.max_generations + 1):
                previous_best = population.best_fitness
                counts = self._next_generation(population)
                population.generation = generation

                if population.best_fitness < previous_best:
                    raise InvariantError(
                        f"Best fitness decreased in generation {generation}: "
                        f"{previous_best!r} -> {population.best_fitness!r}"
                    )
                _check_bounds(population.genomes, self.lower, self.upper, generation)

                history.best_genome = population.best_genome
                history.record(
                    population.best_fitness, population.fitness.mean(), self.evaluations,
                    strategies=counts, elapsed=time.perf_counter() - start,
                )
                if cfg.log_every and generation % cfg.log_every == 0:
                    logger.info(
                        "generation %d: best %.6f, mean %.6f",
                        generation, population.best_fitness, population.fitness.mean(),
                    )
                if on_generation is not None:
                    on_generation(history, population)
        except KeyboardInterrupt:
            history.interrupted = True
            logger.warning(
                "%s interrupted after generation %d", self.label, history.generations
            )
            return history

        logger.info(
            "%s finished: best %.6f after %d generations (%.1fs)",
            self.label, history.final_fitness, history.generations, time.perf_counter() - start,
        )
        return history


class DifferentialEvolution(_Engine):
    """Synchronous DE: all trials of a generation are built, then evaluated together.

    ``X_best`` is taken once at the start of each generation and is not
    refreshed when an individual is replaced during that generation, so
    strategy 2 uses the previous generation's best for every trial. Selection
    happens only after the whole batch of trials has been evaluated.
    """

    def __init__(
        self,
        evaluator: Evaluator,
        grid: UncertaintySampleGrid,
        config: OptimizerConfig,
        rng: np.random.Generator,
        lower: np.ndarray,
        upper: np.ndarray,
        strategies: Sequence[int],
        f_sampler: Callable[[np.random.Generator], float],
        cr_sampler: Callable[[np.random.Generator], float],
        label: str = "DE",
    ):
        self.strategies = tuple(strategies)
        self.f_sampler = f_sampler
        self.cr_sampler = cr_sampler
        self.label = label
        super().__init__(evaluator, grid, config, rng, lower, upper)

    def make_trials(self, population: Population) -> tuple[np.ndarray, list[int]]:
        """Trial vectors for every individual plus per-strategy usage counts."""
        rng = self.rng
        best = population.best_index
        trials = np.empty_like(population.genomes)
        counts = [0] * STRATEGY_COUNT
        for i in range(population.size):
            F = self.f_sampler(rng)
            strategy = select_strategy(self.strategies, rng)
            donor = mutate(strategy, population.genomes, i, F, rng, best_index=best, K=self.config.K)
            donor = repair_bounds(donor, self.lower, self.upper, rng)
            CR = self.cr_sampler(rng)
            if strategy == 4:
                trials[i] = donor
            else:
                trials[i] = crossover(population.genomes[i], donor, CR, rng)
            counts[strategy - 1] += 1
        return trials, counts

    def _next_generation(self, population: Population) -> list[int]:
        trials, counts = self.make_trials(population)
        trial_fitness = self._evaluate(trials)
        survivors = trial_fitness >= population.fitness
        population.genomes[survivors] = trials[survivors]
        population.fitness[survivors] = trial_fitness[survivors]
        return counts


class GeneticAlgorithm(_Engine):
    """Generational real-coded GA with elitism."""

    label = "GA"

    def _tournament(self, fitness: np.ndarray) -> int:
        entrants = self.rng.integers(fitness.size, size=self.config.tournament_size)
        return int(entrants[np.argmax(fitness[entrants])])

    def make_offspring(self, population: Population) -> np.ndarray:
        cfg = self.config
        rng = self.rng
        scale = cfg.mutation_scale * (self.upper - self.lower)
        needed = population.size - cfg.elitism
        children: list[np.ndarray] = []
        while len(children) < needed:
            a = population.genomes[self._tournament(population.fitness)]
            b = population.genomes[self._tournament(population.fitness)]
            c1, c2 = a.copy(), b.copy()
            if rng.random() < cfg.crossover_probability:
                mask = rng.random(self.dim) < 0.5
                c1 = np.where(mask, a, b)
                c2 = np.where(mask, b, a)
            for child in (c1, c2):
                hit = rng.random(self.dim) < cfg.mutation_probability
                n_hit = int(hit.sum())
                if n_hit:
                    child[hit] += rng.normal(0.0, 1.0, n_hit) * scale[hit]
                children.append(np.clip(child, self.lower, self.upper))
        return np.array(children[:needed])

    def _next_generation(self, population: Population) -> list[int]:
        order = np.argsort(-population.fitness, kind="stable")
        elite = order[: self.config.elitism]
        offspring = self.make_offspring(population)
        offspring_fitness = self._evaluate(offspring)
        population.genomes = np.vstack([population.genomes[elite], offspring])
        population.fitness = np.concatenate([population.fitness[elite], offspring_fitness])
        return [0] * STRATEGY_COUNT


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def _bounds(evaluator: Evaluator) -> tuple[np.ndarray, np.ndarray]:
    problem = getattr(evaluator, "problem", None)
    if problem is None:
        raise TypeError("Evaluator must expose the problem whose bounds it evaluates")
    return problem.lower, problem.upper


def run_msms_de(
    evaluator: Evaluator,
    grid: UncertaintySampleGrid,
    config: OptimizerConfig,
    rng: np.random.Generator,
    on_generation: GenerationCallback | None = None,
) -> RunHistory:
    lower, upper = _bounds(evaluator)
    engine = DifferentialEvolution(
        evaluator, grid, config, rng, lower, upper,
        strategies=config.strategies,
        f_sampler=lambda g: sample_F(g, config.F_mean, config.F_std),
        cr_sampler=lambda g: sample_CR(g, config.CR_mean, config.CR_std),
        label="msMS_DE",
    )
    return engine.run(on_generation)


def run_basic_de(
    evaluator: Evaluator,
    grid: UncertaintySampleGrid,
    config: OptimizerConfig,
    rng: np.random.Generator,
    on_generation: GenerationCallback | None = None,
) -> RunHistory:
    """DE/rand/1/bin with constant F and CR."""
    lower, upper = _bounds(evaluator)
    engine = DifferentialEvolution(
        evaluator, grid, config, rng, lower, upper,
        strategies=(1,),
        f_sampler=lambda g: config.F,
        cr_sampler=lambda g: config.CR,
        label="DE1" if len(grid) == 1 else "ms_DE",
    )
    return engine.run(on_generation)


def run_ga(
    evaluator: Evaluator,
    grid: UncertaintySampleGrid,
    config: OptimizerConfig,
    rng: np.random.Generator,
    on_generation: GenerationCallback | None = None,
) -> RunHistory:
    lower, upper = _bounds(evaluator)
    return GeneticAlgorithm(evaluator, grid, config, rng, lower, upper).run(on_generation)


RUNNERS = {
    "msms_de": run_msms_de,
    "ms_de": run_basic_de,
    "de1": run_basic_de,
    "ga": run_ga,
}


def run_optimizer(
    evaluator: Evaluator,
    grid: UncertaintySampleGrid,
    config: OptimizerConfig,
    rng: np.random.Generator,
    on_generation: GenerationCallback | None = None,
) -> RunHistory:
    try:
        runner = RUNNERS[config.algorithm]
    except KeyError:
        raise ValueError(f"Unknown algorithm {config.algorithm!r}; expected one of {ALGORITHMS}") from None
    return runner(evaluator, grid, config, rng, on_generation)


def parameter_label(config: OptimizerConfig, n_samples: int) -> str:
    """Short description of the search parameters, e.g. ``F = 0.9, CR = 0.1, N = 9``."""
    if config.algorithm == "msms_de":
        f = f"N({config.F_mean:g}, {config.F_std:g})" if config.F_std else f"{config.F_mean:g}"
        cr = f"N({config.CR_mean:g}, {config.CR_std:g})" if config.CR_std else f"{config.CR_mean:g}"
        return f"F = {f}, CR = {cr}, N = {n_samples}"
    if config.algorithm == "ga":
        return (
            f"P_c = {config.crossover_probability:g}, "
            f"P_m = {config.mutation_probability:g}, N = {n_samples}"
        )
    return f"F = {config.F:g}, CR = {config.CR:g}, N = {n_samples}"
