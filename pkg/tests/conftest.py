"""Shared test fixtures for qrobust."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pytest

from qrobust.core.problems import ConsensusProblem, EnsembleProblem, SphereProblem
from qrobust.core.quantum_state import random_density_operator
from qrobust.logging import LOGGER_NAME


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture(autouse=True)
def _reset_logging():
    """Drop handlers a test (or the CLI under CliRunner) attached to the package logger."""
    yield
    logger = logging.getLogger(LOGGER_NAME)
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)


@pytest.fixture
def random_state(rng):
    """Factory for random density operators of a given dimension (and rank)."""

    def make(dim: int, rank: int | None = None):
        return random_density_operator(dim, rng, rank=rank)

    return make


@pytest.fixture
def small_ensemble() -> EnsembleProblem:
    """Ensemble problem with a coarse control grid (25 steps of 0.4)."""
    return EnsembleProblem(uncertainty=0.2, steps=25)


@pytest.fixture
def small_consensus() -> ConsensusProblem:
    """Consensus problem with 10 control steps of 2 ns."""
    return ConsensusProblem(uncertainty=0.02, steps=10)


@pytest.fixture
def sphere() -> SphereProblem:
    return SphereProblem(dimension=5)


@pytest.fixture
def write_config(tmp_path: Path):
    """Write YAML text to ``config.yaml`` and return its path."""

    def write(text: str, name: str = "config.yaml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return write


SMALL_SPHERE_YAML = """\
problem: sphere
seed: 11
log_every: 0
algorithm:
  name: msms_de
  population_size: 8
  max_generations: 6
sphere:
  dimension: 4
test:
  n_samples: 5
"""

SMALL_ENSEMBLE_YAML = """\
problem: ensemble
seed: 7
log_every: 0
algorithm:
  name: msms_de
  population_size: 6
  max_generations: 3
grid:
  points: 2
ensemble:
  steps: 25
test:
  n_samples: 12
"""

SMALL_CONSENSUS_YAML = """\
problem: consensus
seed: 3
log_every: 0
algorithm:
  name: de1
  population_size: 6
  max_generations: 2
consensus:
  steps: 4
test:
  n_samples: 4
  drift_steps: 5
"""
