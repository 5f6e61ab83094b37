"""Data models for qrobust experiments."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any

import numpy as np
import pandas as pd


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class ExperimentState(Enum):
    IDLE = "idle"
    CONFIGURED = "configured"
    TRAINING = "training"
    TRAINED = "trained"
    TESTED = "tested"
    INTERRUPTED = "interrupted"
    FAILED = "failed"


STRATEGY_COUNT = 4

DRIFT_COLUMNS = ["t", "d1_target", "d2_target", "d3_target", "d12", "d13", "d23"]


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass
class VerificationCheck:
    """Single analytic check with its measured residual."""

    name: str = ""
    category: str = ""        # "quantum_state", "dynamics", "problems", "optimizers"
    status: str = "PASS"      # "PASS", "FAIL"
    residual: float = 0.0
    tolerance: float = 0.0
    message: str = ""

    @classmethod
    def measure(
        cls,
        name: str,
        category: str,
        residual: float,
        tolerance: float,
        message: str = "",
    ) -> VerificationCheck:
        residual = float(residual)
        passed = bool(np.isfinite(residual) and residual < tolerance)
        return cls(
            name=name,
            category=category,
            status="PASS" if passed else "FAIL",
            residual=residual,
            tolerance=tolerance,
            message=message,
        )


@dataclass
class VerificationResult:
    """Outcome of a full verification pass."""

    overall_status: str = "PASS"
    checks: list[VerificationCheck] = field(default_factory=list)
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = datetime.now().isoformat(timespec="seconds")

    @property
    def passed(self) -> bool:
        return self.overall_status == "PASS"

    @property
    def failures(self) -> list[VerificationCheck]:
        return [c for c in self.checks if c.status == "FAIL"]


# ---------------------------------------------------------------------------
# Robustness testing
# ---------------------------------------------------------------------------

@dataclass
class RobustnessReport:
    """Per-sample fitness of one genome plus the statistics derived from it.

    Statistics are properties so they always agree with the stored samples.
    """

    mode: str = "uniform"                      # "uniform", "additive_noise"
    fitness: np.ndarray = field(default_factory=lambda: np.zeros(0))
    thetas: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    drift: pd.DataFrame | None = None          # consensus only
    evolution: pd.DataFrame | None = None      # consensus only

    def __post_init__(self):
        self.fitness = np.asarray(self.fitness, dtype=float).ravel()
        thetas = np.asarray(self.thetas, dtype=float)
        n = self.fitness.size
        if thetas.ndim == 2:
            n_params = thetas.shape[1]
        else:
            n_params = thetas.size // n if n else 0
        self.thetas = thetas.reshape(n, n_params)

    @property
    def n_samples(self) -> int:
        return int(self.fitness.size)

    def _stat(self, func) -> float:
        return float(func(self.fitness)) if self.fitness.size else float("nan")

    @property
    def mean(self) -> float:
        return self._stat(np.mean)

    @property
    def min(self) -> float:
        return self._stat(np.min)

    @property
    def max(self) -> float:
        return self._stat(np.max)

    @property
    def std(self) -> float:
        return self._stat(np.std)

    def summary(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "n_samples": self.n_samples,
            "mean": self.mean,
            "min": self.min,
            "max": self.max,
            "std": self.std,
        }

    def to_frame(self) -> pd.DataFrame:
        """One row per test sample: ``sample, theta_1..theta_p, fitness``."""
        df = pd.DataFrame({"sample": np.arange(self.n_samples, dtype=int)})
        for k in range(self.thetas.shape[1]):
            df[f"theta_{k + 1}"] = self.thetas[:, k]
        df["fitness"] = self.fitness
        return df


# ---------------------------------------------------------------------------
# Training history
# ---------------------------------------------------------------------------

@dataclass
class RunHistory:
    """Per-generation trace of one optimizer run."""

    algorithm: str = ""
    best_fitness: list[float] = field(default_factory=list)
    mean_fitness: list[float] = field(default_factory=list)
    evaluations: list[int] = field(default_factory=list)
    strategy_counts: list[list[int]] = field(default_factory=list)
    elapsed_seconds: list[float] = field(default_factory=list)
    best_genome: np.ndarray | None = None
    interrupted: bool = False

    @property
    def generations(self) -> int:
        """Completed generations, not counting the initial population."""
        return max(len(self.best_fitness) - 1, 0)

    @property
    def final_fitness(self) -> float:
        return self.best_fitness[-1] if self.best_fitness else float("nan")

    def record(
        self,
        best: float,
        mean: float,
        evaluations: int,
        strategies: list[int] | None = None,
        elapsed: float = 0.0,
    ) -> None:
        self.best_fitness.append(float(best))
        self.mean_fitness.append(float(mean))
        self.evaluations.append(int(evaluations))
        self.strategy_counts.append(list(strategies) if strategies else [0] * STRATEGY_COUNT)
        self.elapsed_seconds.append(float(elapsed))

    def to_frame(self) -> pd.DataFrame:
        counts = np.array(self.strategy_counts, dtype=int).reshape(-1, STRATEGY_COUNT)
        df = pd.DataFrame({
            "generation": np.arange(len(self.best_fitness), dtype=int),
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "evaluations": np.array(self.evaluations, dtype=int),
        })
        for s in range(STRATEGY_COUNT):
            df[f"strategy_{s + 1}"] = counts[:, s]
        return df

    def timing_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "generation": np.arange(len(self.elapsed_seconds), dtype=int),
            "elapsed_seconds": self.elapsed_seconds,
        })


# ---------------------------------------------------------------------------
# Run record
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    """Everything needed to compare a finished run against others."""

    problem: str = ""
    algorithm: str = ""
    parameters: str = ""
    version: str = ""
    seed: int = 0
    generations: int = 0
    interrupted: bool = False
    training_fitness: float = float("nan")
    training_seconds: float = 0.0           # from timing.csv, never serialized here
    report: dict[str, Any] = field(default_factory=dict)

    @property
    def testing_mean(self) -> float:
        value = self.report.get("mean")
        return float("nan") if value is None else float(value)

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem": self.problem,
            "algorithm": self.algorithm,
            "parameters": self.parameters,
            "version": self.version,
            "seed": int(self.seed),
            "generations": int(self.generations),
            "interrupted": bool(self.interrupted),
            "training_fitness": float(self.training_fitness),
            "report": {
                k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.report.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunRecord:
        return cls(
            problem=str(data.get("problem", "")),
            algorithm=str(data.get("algorithm", "")),
            parameters=str(data.get("parameters", "")),
            version=str(data.get("version", "")),
            seed=int(data.get("seed", 0)),
            generations=int(data.get("generations", 0)),
            interrupted=bool(data.get("interrupted", False)),
            training_fitness=float(data.get("training_fitness", float("nan"))),
            report=dict(data.get("report") or {}),
        )
