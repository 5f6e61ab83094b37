"""Robustness testing: Monte-Carlo uncertainty draws, additive genome noise,
reduced-state consensus checks and post-control drift of the consensus network.

Random draws are always made up front from the caller's generator, before any
fitness evaluation, so chunking and threading never change a report.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import expm

from qrobust.core.quantum_state import (
    DensityOperator,
    batch_partial_trace,
    batch_trace_distance,
    dagger,
)
from qrobust.logging import get_logger
from qrobust.models import DRIFT_COLUMNS, RobustnessReport

if TYPE_CHECKING:
    from qrobust.core.problems import ConsensusProblem, RobustControlProblem

logger = get_logger(__name__)

DEFAULT_CHUNK = 500
EXACT_CONSENSUS_TOL = 1e-6
APPROXIMATE_CONSENSUS_TOL = 0.02

NOISE_MODES = ("training", "testing")


# ---------------------------------------------------------------------------
# Additive genome noise
# ---------------------------------------------------------------------------

def additive_noise_samples(
    genome: np.ndarray,
    fraction: float,
    count: int,
    rng: np.random.Generator,
    lower: np.ndarray,
    upper: np.ndarray,
    mode: str = "training",
) -> np.ndarray:
    """Noisy copies of ``genome`` with offsets scaled by ``fraction`` of each range.

    Training mode returns the genome itself, then alternately a copy shifted up
    by ``fraction * range * U(0, 1)`` and one shifted down by the same law
    (three samples for ``count=3``). Testing mode returns ``count`` copies
    shifted by ``fraction * range * (2 U(0, 1) - 1)``. All samples are clamped
    to the bounds. Shape is ``(count, D)``.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"Noise fraction must lie in [0, 1), got {fraction}")
    if mode not in NOISE_MODES:
        raise ValueError(f"Unknown noise mode {mode!r}; expected one of {NOISE_MODES}")
    genome = np.asarray(genome, dtype=float)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), genome.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), genome.shape)
    scale = fraction * (upper - lower)

    samples = np.empty((count, genome.size))
    if mode == "testing":
        for k in range(count):
            samples[k] = genome + scale * (2.0 * rng.random(genome.size) - 1.0)
    else:
        for k in range(count):
            if k == 0:
                samples[k] = genome
            elif k % 2:
                samples[k] = genome + scale * rng.random(genome.size)
            else:
                samples[k] = genome - scale * rng.random(genome.size)
    return np.clip(samples, lower, upper)


# ---------------------------------------------------------------------------
# Consensus
# ---------------------------------------------------------------------------

class ConsensusCheck(NamedTuple):
    is_consensus: bool
    distances: dict[tuple[int, int], float]


def reduced_states(states: np.ndarray, local_dims: Sequence[int]) -> list[np.ndarray]:
    return [batch_partial_trace(states, local_dims, k) for k in range(len(local_dims))]


def check_consensus(
    rho: DensityOperator,
    local_dims: Sequence[int],
    tolerance: float = EXACT_CONSENSUS_TOL,
) -> ConsensusCheck:
    """Pairwise trace distances of all single-node reduced states.

    The state is in consensus when the largest pairwise distance is within
    ``tolerance``.
    """
    reduced = reduced_states(rho.matrix, local_dims)
    distances = {
        (i, j): float(batch_trace_distance(reduced[i], reduced[j]))
        for i, j in itertools.combinations(range(len(reduced)), 2)
    }
    worst = max(distances.values(), default=0.0)
    return ConsensusCheck(is_consensus=worst <= tolerance, distances=distances)


def consensus_distances(
    states: np.ndarray,
    target: np.ndarray,
    local_dims: Sequence[int] = (2, 2, 2),
) -> np.ndarray:
    """Rows of ``(d1_target, d2_target, d3_target, d12, d13, d23)`` for stacked states."""
    reduced = reduced_states(states, local_dims)
    columns = [batch_trace_distance(r, target) for r in reduced]
    columns += [
        batch_trace_distance(reduced[i], reduced[j])
        for i, j in itertools.combinations(range(len(reduced)), 2)
    ]
    return np.stack(columns, axis=-1)


class _DistanceAccumulator:
    """Running per-step sums of consensus distances over sample chunks."""

    def __init__(self, steps: int, dt: float, target: np.ndarray):
        self.sums = np.zeros((steps + 1, 6))
        self.count = 0
        self.dt = dt
        self.target = target

    def observe(self, step: int, _t: float, states: np.ndarray) -> None:
        self.sums[step] += consensus_distances(states, self.target).sum(axis=0)

    def frame(self) -> pd.DataFrame:
        means = self.sums / max(self.count, 1)
        t = np.arange(self.sums.shape[0]) * self.dt
        return pd.DataFrame(np.column_stack([t, means]), columns=DRIFT_COLUMNS)


def _free_drift(states: np.ndarray, propagator: np.ndarray, steps: int, acc: _DistanceAccumulator) -> None:
    acc.observe(0, 0.0, states)
    for step in range(steps):
        states = propagator @ states @ dagger(propagator)
        acc.observe(step + 1, (step + 1) * acc.dt, states)


def free_drift_analysis(
    rho_final: DensityOperator | np.ndarray,
    drift: np.ndarray,
    horizon: float,
    dt: float,
) -> pd.DataFrame:
    """Distances after the controls are withdrawn, evolving under ``drift`` alone.

    ``rho_final`` may be one state or a stack; stacked curves are averaged.
    """
    states = rho_final.matrix if isinstance(rho_final, DensityOperator) else np.asarray(rho_final)
    states = states.reshape(-1, *states.shape[-2:])
    steps = int(round(horizon / dt))
    target = 0.5 * np.ones((2, 2), dtype=np.complex128)
    acc = _DistanceAccumulator(steps, dt, target)
    acc.count = states.shape[0]
    _free_drift(states, expm(-1j * dt * np.asarray(drift)), steps, acc)
    return acc.frame()


def consensus_time_series(
    genome: np.ndarray,
    problem: ConsensusProblem,
    params: np.ndarray,
    drift_horizon: float = 20.0,
    drift_steps: int = 100,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Sample-averaged distances under control (``evolution``) and after it (``drift``)."""
    params = problem.as_params(params)
    target = batch_partial_trace(problem.target_state.matrix, (2, 2, 2), 0)
    evolution = _DistanceAccumulator(problem.steps, problem.dt, target)
    drift_dt = drift_horizon / drift_steps
    drift = _DistanceAccumulator(drift_steps, drift_dt, target)
    propagator = expm(-1j * drift_dt * problem.drift)
    genome = problem.check_genomes(genome)

    for start in range(0, params.shape[0], chunk_size):
        chunk = params[start:start + chunk_size]
        final = problem.final_states(genome, chunk, observer=evolution.observe)
        _free_drift(final, propagator, drift_steps, drift)
        evolution.count += chunk.shape[0]
        drift.count += chunk.shape[0]
    return evolution.frame(), drift.frame()


# ---------------------------------------------------------------------------
# Testing protocols
# ---------------------------------------------------------------------------

def _evaluate_chunks(
    problem: RobustControlProblem,
    genomes: np.ndarray,
    params: np.ndarray,
    chunk_size: int,
    threads: int,
    by_genome: bool,
) -> np.ndarray:
    """Fitness of (genome, params) pairs split into row chunks; order is preserved."""
    total = genomes.shape[0] if by_genome else params.shape[0]
    if total == 0:
        return np.zeros(0)
    bounds = [(s, min(s + chunk_size, total)) for s in range(0, total, chunk_size)]

    def run(span: tuple[int, int]) -> np.ndarray:
        a, b = span
        if by_genome:
            return problem.sample_fitness(genomes[a:b], params)[:, 0]
        return problem.sample_fitness(genomes, params[a:b])[0]

    if threads <= 1 or len(bounds) == 1:
        parts = [run(span) for span in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    return np.concatenate(parts)


def monte_carlo_test(
    genome: np.ndarray,
    problem: RobustControlProblem,
    n_samples: int,
    rng: np.random.Generator,
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> RobustnessReport:
    """Fitness under ``n_samples`` uncertainty tuples drawn uniformly from ``[1-E, 1+E]``."""
    if n_samples < 0:
        raise ValueError(f"n_samples must be >= 0, got {n_samples}")
    e = problem.uncertainty
    thetas = rng.uniform(1.0 - e, 1.0 + e, size=(n_samples, problem.n_params))
    genome = problem.check_genomes(genome)
    fitness = _evaluate_chunks(problem, genome, thetas, chunk_size, threads, by_genome=False)
    logger.debug("Monte-Carlo test over %d samples finished", n_samples)
    return RobustnessReport(mode="uniform", fitness=fitness, thetas=thetas)


def additive_noise_test(
    genome: np.ndarray,
    problem: RobustControlProblem,
    fraction: float,
    n_samples: int,
    rng: np.random.Generator,
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> RobustnessReport:
    """Fitness of ``n_samples`` noisy copies of the genome at nominal uncertainty."""
    if n_samples < 0:
        raise ValueError(f"n_samples must be >= 0, got {n_samples}")
    genome = problem.check_genomes(genome)[0]
    variants = additive_noise_samples(
        genome, fraction, n_samples, rng, problem.lower, problem.upper, mode="testing"
    )
    nominal = problem.nominal_params()
    fitness = _evaluate_chunks(problem, variants, nominal, chunk_size, threads, by_genome=True)
    thetas = np.ones((n_samples, problem.n_params))
    return RobustnessReport(mode="additive_noise", fitness=fitness, thetas=thetas)
