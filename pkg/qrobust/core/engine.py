"""Experiment orchestrator: Configure -> Build -> Train -> Save -> Test -> Record."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from qrobust import __version__
from qrobust.config import ConfigError, ExperimentConfig, save_config
from qrobust.core.optimizers import (
    EvaluationError,
    PopulationEvaluator,
    parameter_label,
    run_optimizer,
)
from qrobust.core.problems import (
    ConsensusProblem,
    EnsembleProblem,
    NoisyLandscapeProblem,
    RobustControlProblem,
    SphereProblem,
)
from qrobust.core.robustness import (
    additive_noise_test,
    consensus_time_series,
    monte_carlo_test,
)
from qrobust.io import records
from qrobust.logging import get_logger
from qrobust.models import ExperimentState, RobustnessReport, RunHistory, RunRecord

logger = get_logger(__name__)

GA_INTERNALS = (
    "tournament selection, uniform crossover with probability P_c, "
    "Gaussian mutation with probability P_m, clamped to bounds, elitism"
)


def build_problem(config: ExperimentConfig) -> RobustControlProblem:
    """Instantiate the configured problem from a resolved configuration."""
    uncertainty = config.grid.uncertainty if config.grid.uncertainty is not None else 0.0
    if config.problem == "ensemble":
        s = config.ensemble
        return EnsembleProblem(
            uncertainty=uncertainty,
            phi=s.phi,
            horizon=s.horizon,
            steps=s.steps,
            control_min=s.control_min,
            control_max=s.control_max,
            substeps=s.substeps,
            free_frequency=s.free_frequency,
            decay_down=s.decay_down,
            decay_up=s.decay_up,
            dephasing=s.dephasing,
            backend=s.backend,
        )
    if config.problem == "consensus":
        s = config.consensus
        return ConsensusProblem(
            uncertainty=uncertainty,
            couplings=s.couplings,
            horizon=s.horizon,
            steps=s.steps,
            control_min=s.control_min,
            control_max=s.control_max,
        )
    if config.problem == "sphere":
        return SphereProblem(dimension=config.sphere.dimension, bound=config.sphere.bound)
    if config.problem == "noisy-landscape":
        s = config.landscape
        return NoisyLandscapeProblem(
            dimension=s.dimension, chirp=s.chirp, spectral_width=s.spectral_width
        )
    raise ValueError(f"Unknown problem {config.problem!r}")


@dataclass
class TrainingResult:
    history: RunHistory
    record: RunRecord
    report: RobustnessReport | None
    output_dir: Path


class ExperimentEngine:
    """Runs one experiment end to end and writes its run directory."""

    STAGES = [
        (0, "설정 확인"),
        (1, "문제 구성"),
        (2, "학습"),
        (3, "결과 저장"),
        (4, "강건성 테스트"),
        (5, "기록 생성"),
    ]

    def __init__(self, config: ExperimentConfig | None = None):
        self.config = (config or ExperimentConfig()).resolve()
        self.problem: RobustControlProblem | None = None
        self._state = ExperimentState.IDLE
        self._latest: RunHistory | None = None
        self._on_stage: Callable[[int, str], None] | None = None
        self._on_progress: Callable[[int, int], None] | None = None
        self._on_log: Callable[[str], None] | None = None

    def set_callbacks(
        self,
        on_stage: Callable[[int, str], None] | None = None,
        on_progress: Callable[[int, int], None] | None = None,
        on_log: Callable[[str], None] | None = None,
    ) -> None:
        self._on_stage = on_stage
        self._on_progress = on_progress
        self._on_log = on_log

    @property
    def state(self) -> ExperimentState:
        return self._state

    # ------------------------------------------------------------------
    # Design metadata
    # ------------------------------------------------------------------

    def design(self) -> dict[str, Any]:
        """Modelling and search conventions recorded with every run."""
        cfg = self.config
        problem = self._require_problem()
        grid = problem.make_training_grid(cfg.grid.points)
        design: dict[str, Any] = {
            "grid_placement": "endpoints-inclusive equal spacing in [1 - E, 1 + E], "
            "lexicographic Cartesian product",
            "grid_values": [float(v) for v in grid.values],
            "grid_size": len(grid),
            "selection": "trial survives when its averaged fitness is >= the target's",
            "best_tie_break": "lowest index",
            "generations": "synchronous (best vector fixed per generation)",
            "test_sampling": "uniform in [1 - E, 1 + E] per uncertain parameter",
        }
        if cfg.algorithm.name == "ga":
            design["ga_internals"] = GA_INTERNALS
        design.update(problem.design())
        return design

    # ------------------------------------------------------------------
    # Stages
    # ------------------------------------------------------------------

    def build(self) -> RobustControlProblem:
        self._emit_stage(1)
        self.problem = build_problem(self.config)
        self._state = ExperimentState.CONFIGURED
        self._log(f"문제 구성 완료: {self.problem.name}, genome {self.problem.dim}")
        return self.problem

    def train(self, output_dir: str | Path | None = None) -> TrainingResult:
        """Train, persist and test; returns the run's history, record and report."""
        cfg = self.config
        out = Path(output_dir or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)

        self._emit_stage(0)
        problem = self.build()
        design = self.design()
        save_config(cfg, out / records.CONFIG_FILE, extra={"design": design})
        self._log(f"설정 저장: {out / records.CONFIG_FILE}")
        for key, value in design.items():
            logger.info("design %s: %s", key, value)

        grid = problem.make_training_grid(cfg.grid.points)
        optimizer = cfg.optimizer_config()
        try:
            optimizer.validate(problem.dim)
        except ValueError as e:
            raise ConfigError(str(e), "algorithm") from None
        evaluator = PopulationEvaluator(
            problem, threads=cfg.threads, training_noise=cfg.grid.training_noise or 0.0
        )
        rng = np.random.default_rng(cfg.seed)

        self._emit_stage(2)
        self._state = ExperimentState.TRAINING
        self._log(
            f"학습 시작: {cfg.algorithm.name}, NP={optimizer.population_size}, "
            f"G_max={optimizer.max_generations}, N={len(grid)}"
        )
        self._latest = None
        try:
            history = run_optimizer(evaluator, grid, optimizer, rng, on_generation=self._on_generation)
        except EvaluationError as e:
            self._state = ExperimentState.FAILED
            if self._latest is not None:
                self._save_training(out, self._latest, problem)
            if e.genome is not None:
                records.write_genome_csv(e.genome, problem.channel_labels, out / records.FAILED_GENOME_FILE)
                self._log(f"평가 실패 genome 저장: {out / records.FAILED_GENOME_FILE}")
            raise

        self._emit_stage(3)
        self._save_training(out, history, problem)
        self._state = ExperimentState.INTERRUPTED if history.interrupted else ExperimentState.TRAINED

        report: RobustnessReport | None = None
        if history.interrupted:
            self._log(f"학습 중단됨: {history.generations} 세대까지 저장")
        else:
            report = self.test(history.best_genome, out)

        self._emit_stage(5)
        record = RunRecord(
            problem=problem.name,
            algorithm=cfg.algorithm.name,
            parameters=parameter_label(optimizer, evaluator.samples_per_genome(grid)),
            version=__version__,
            seed=cfg.seed,
            generations=history.generations,
            interrupted=history.interrupted,
            training_fitness=history.final_fitness,
            report=report.summary() if report is not None else {},
        )
        records.write_record_yaml(record, out / records.RECORD_FILE)
        record.training_seconds = history.elapsed_seconds[-1] if history.elapsed_seconds else 0.0
        self._log(f"기록 저장: {out / records.RECORD_FILE}")
        return TrainingResult(history=history, record=record, report=report, output_dir=out)

    def test(
        self,
        genome: np.ndarray,
        output_dir: str | Path | None = None,
        n_samples: int | None = None,
        mode: str | None = None,
        seed: int | None = None,
    ) -> RobustnessReport:
        """Robustness test of one genome; writes report.csv (and consensus time series)."""
        cfg = self.config
        problem = self._require_problem()
        n_samples = cfg.test.n_samples if n_samples is None else n_samples
        mode = mode or cfg.test.mode
        rng = np.random.default_rng(cfg.test.seed if seed is None else seed)

        self._emit_stage(4)
        self._log(f"강건성 테스트: {mode}, {n_samples} samples")
        if mode == "additive_noise":
            report = additive_noise_test(
                genome, problem, cfg.test.noise_fraction, n_samples, rng, threads=cfg.threads
            )
        else:
            report = monte_carlo_test(genome, problem, n_samples, rng, threads=cfg.threads)

        if isinstance(problem, ConsensusProblem) and report.n_samples:
            params = report.thetas if mode == "uniform" else problem.nominal_params()
            report.evolution, report.drift = consensus_time_series(
                genome,
                problem,
                params,
                drift_horizon=cfg.test.drift_horizon,
                drift_steps=cfg.test.drift_steps,
            )
            worst = float(report.drift[["d12", "d13", "d23"]].to_numpy().max())
            within = worst <= cfg.test.consensus_tolerance
            self._log(
                f"자유 진화 최대 pairwise 거리: {worst:.4f} "
                f"({'허용 범위 이내' if within else '허용 범위 초과'}, tol {cfg.test.consensus_tolerance})"
            )

        if output_dir is not None:
            self.save_report(report, output_dir)
        self._state = ExperimentState.TESTED
        self._log(
            f"테스트 완료: mean {report.mean:.6f}, min {report.min:.6f}, "
            f"max {report.max:.6f}, std {report.std:.6f}"
        )
        return report

    def save_report(self, report: RobustnessReport, output_dir: str | Path) -> None:
        out = Path(output_dir)
        records.write_report_csv(report, out / records.REPORT_FILE)
        if report.drift is not None:
            records.write_frame_csv(report.drift, out / records.DRIFT_FILE)
        if report.evolution is not None:
            records.write_frame_csv(report.evolution, out / records.EVOLUTION_FILE)

    def load_genome(self, path: str | Path) -> np.ndarray:
        problem = self._require_problem()
        genome = records.read_genome_csv(path, problem.channel_labels)
        if genome.size != problem.dim:
            raise ValueError(
                f"{path}: genome has {genome.size} values, {problem.name} expects {problem.dim}"
            )
        return genome

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _save_training(self, out: Path, history: RunHistory, problem: RobustControlProblem) -> None:
        records.write_history_csv(history, out / records.HISTORY_FILE)
        records.write_timing_csv(history, out / records.TIMING_FILE)
        if history.best_genome is not None:
            records.write_genome_csv(history.best_genome, problem.channel_labels, out / records.GENOME_FILE)
        self._log(f"학습 결과 저장: {history.generations} 세대, best {history.final_fitness:.6f}")

    def _on_generation(self, history: RunHistory, _population) -> None:
        self._latest = history
        if self._on_progress:
            self._on_progress(history.generations, self.config.algorithm.max_generations or 0)

    def _require_problem(self) -> RobustControlProblem:
        if self.problem is None:
            return self.build()
        return self.problem

    def _emit_stage(self, stage_idx: int) -> None:
        if self._on_stage and stage_idx < len(self.STAGES):
            self._on_stage(stage_idx, self.STAGES[stage_idx][1])

    def _log(self, message: str) -> None:
        logger.info(message)
        if self._on_log:
            self._on_log(message)
