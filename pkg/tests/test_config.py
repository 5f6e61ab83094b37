"""Tests for YAML configuration loading."""

from __future__ import annotations

from pathlib import Path

import pytest

from qrobust.config import (
    FULL_SCALE_GENERATIONS,
    ConfigError,
    ExperimentConfig,
    save_config,
)
from tests.conftest import SMALL_CONSENSUS_YAML, SMALL_SPHERE_YAML


class TestExperimentConfigDefaults:
    def test_default_problem(self):
        config = ExperimentConfig()
        assert config.problem == "ensemble"
        assert config.algorithm.name == "msms_de"

    def test_default_strategy_pool(self):
        assert ExperimentConfig().algorithm.strategies == [1, 2, 3, 4]

    def test_presets_left_unresolved(self):
        config = ExperimentConfig()
        assert config.algorithm.population_size is None
        assert config.grid.uncertainty is None
        assert config.test.n_samples is None


class TestExperimentConfigLoad:
    def test_load_minimal(self, write_config):
        config = ExperimentConfig.load(write_config("{}\n"))
        assert config.problem == "ensemble"

    def test_load_sections(self, write_config):
        config = ExperimentConfig.load(write_config(SMALL_SPHERE_YAML))
        assert config.problem == "sphere"
        assert config.seed == 11
        assert config.algorithm.population_size == 8
        assert config.sphere.dimension == 4
        assert config.test.n_samples == 5

    def test_ints_accepted_for_floats(self, write_config):
        config = ExperimentConfig.load(write_config("algorithm:\n  F: 1\n"))
        assert config.algorithm.F == 1.0
        assert isinstance(config.algorithm.F, float)

    def test_design_block_ignored(self, write_config):
        config = ExperimentConfig.load(write_config("problem: sphere\ndesign:\n  anything: 1\n"))
        assert config.problem == "sphere"

    def test_unknown_key_reports_line(self, write_config):
        path = write_config("problem: sphere\nalgorithm:\n  name: de1\n  popsize: 5\n")
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.load(path)
        assert info.value.line == 4
        assert "algorithm.popsize" in str(info.value)
        assert str(info.value).startswith(f"{path}:4:")

    def test_wrong_type_reports_line(self, write_config):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.load(write_config("seed: 1\nalgorithm:\n  population_size: many\n"))
        assert info.value.line == 3

    def test_bool_is_not_an_integer(self, write_config):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(write_config("seed: true\n"))

    def test_unknown_problem(self, write_config):
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.load(write_config("seed: 1\nproblem: tsp\n"))
        assert info.value.line == 2

    def test_section_must_be_mapping(self, write_config):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(write_config("grid: 3\n"))

    def test_invalid_yaml(self, write_config):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(write_config("algorithm: [1, 2\n"))

    def test_top_level_must_be_mapping(self, write_config):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(write_config("- 1\n- 2\n"))

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "absent.yaml")

    @pytest.mark.parametrize(
        "text",
        [
            "threads: 0\n",
            "grid:\n  points: 0\n",
            "grid:\n  uncertainty: 1.5\n",
            "ensemble:\n  backend: spectral\n",
            "consensus:\n  couplings: [0.1, 0.1]\n",
            "test:\n  mode: gaussian\n",
            "test:\n  noise_fraction: 1.0\n",
            "algorithm:\n  preset: ms_de9\n",
        ],
    )
    def test_rejected_values(self, write_config, text):
        with pytest.raises(ConfigError):
            ExperimentConfig.load(write_config(text))


class TestResolve:
    def test_ensemble_presets(self):
        cfg = ExperimentConfig(problem="ensemble").resolve()
        assert cfg.algorithm.population_size == 50
        assert cfg.algorithm.max_generations == 2000
        assert cfg.grid.uncertainty == 0.2
        assert cfg.test.n_samples == 2000
        assert cfg.test.mode == "uniform"

    def test_full_scale(self):
        cfg = ExperimentConfig(problem="consensus", full_scale=True).resolve()
        assert cfg.algorithm.population_size == 100
        assert cfg.algorithm.max_generations == FULL_SCALE_GENERATIONS

    def test_full_scale_ignored_for_benchmarks(self):
        cfg = ExperimentConfig(problem="sphere", full_scale=True).resolve()
        assert cfg.algorithm.max_generations == 500

    def test_explicit_values_win(self, write_config):
        cfg = ExperimentConfig.load(write_config(SMALL_SPHERE_YAML)).resolve()
        assert cfg.algorithm.population_size == 8
        assert cfg.algorithm.max_generations == 6

    def test_landscape_defaults_to_additive_noise(self):
        cfg = ExperimentConfig(problem="noisy-landscape").resolve()
        assert cfg.test.mode == "additive_noise"
        assert cfg.grid.training_noise == 0.05

    def test_de1_uses_nominal_sample_only(self, write_config):
        cfg = ExperimentConfig.load(write_config(SMALL_CONSENSUS_YAML)).resolve()
        assert cfg.grid.points == 1
        assert cfg.grid.training_noise == 0.0
        assert cfg.algorithm.strategies == [1]

    def test_preset_sets_F_and_CR(self, write_config):
        path = write_config("algorithm:\n  name: ms_de\n  preset: ms_de2\n")
        cfg = ExperimentConfig.load(path).resolve()
        assert (cfg.algorithm.F, cfg.algorithm.CR) == (0.9, 0.9)
        assert cfg.algorithm.strategies == [1]

    def test_resolve_leaves_original_untouched(self):
        config = ExperimentConfig()
        config.resolve()
        assert config.algorithm.population_size is None


class TestOverrides:
    def test_values_applied(self):
        cfg = ExperimentConfig().with_overrides(seed=5, algorithm="ga", max_generations=10)
        assert cfg.seed == 5
        assert cfg.algorithm.name == "ga"
        assert cfg.algorithm.max_generations == 10

    def test_none_ignored(self):
        cfg = ExperimentConfig(seed=9).with_overrides(seed=None)
        assert cfg.seed == 9

    def test_unknown_override(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(colour="red")

    def test_invalid_override(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(threads=0)


class TestOptimizerConfig:
    def test_requires_resolution(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().optimizer_config()

    def test_fields_carried_over(self, write_config):
        cfg = ExperimentConfig.load(write_config(SMALL_SPHERE_YAML)).resolve()
        opt = cfg.optimizer_config()
        assert opt.algorithm == "msms_de"
        assert opt.population_size == 8
        assert opt.strategies == (1, 2, 3, 4)
        assert opt.log_every == 0


class TestSaveConfig:
    def test_round_trip(self, tmp_path: Path):
        cfg = ExperimentConfig(problem="consensus", seed=42).resolve()
        path = tmp_path / "config.resolved.yaml"
        save_config(cfg, path, extra={"design": {"note": "metadata"}})
        loaded = ExperimentConfig.load(path)
        assert loaded.to_dict() == cfg.to_dict()

    def test_extra_block_written(self, tmp_path: Path):
        path = tmp_path / "config.yaml"
        save_config(ExperimentConfig(), path, extra={"design": {"backend": "bloch"}})
        assert "design:" in path.read_text(encoding="utf-8")
