"""YAML configuration loading for qrobust experiments.

Every ``null`` value is resolved against per-problem presets by
:meth:`ExperimentConfig.resolve`; the resolved document is what a run writes
next to its results.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

import yaml

from qrobust.core.optimizers import ALGORITHMS, OptimizerConfig

PROBLEMS = ("ensemble", "consensus", "sphere", "noisy-landscape")
TEST_MODES = ("uniform", "additive_noise")
BACKENDS = ("bloch", "lindblad")

FULL_SCALE_GENERATIONS = 50000

# population_size, desk-scale max_generations, uncertainty, training_noise, test mode, test samples
PROBLEM_DEFAULTS: dict[str, dict[str, Any]] = {
    "ensemble": {
        "population_size": 50, "max_generations": 2000, "full_scale": True,
        "uncertainty": 0.2, "training_noise": 0.0, "mode": "uniform", "n_samples": 2000,
    },
    "consensus": {
        "population_size": 100, "max_generations": 3000, "full_scale": True,
        "uncertainty": 0.02, "training_noise": 0.0, "mode": "uniform", "n_samples": 2000,
    },
    "sphere": {
        "population_size": 50, "max_generations": 500, "full_scale": False,
        "uncertainty": 0.0, "training_noise": 0.0, "mode": "uniform", "n_samples": 2000,
    },
    "noisy-landscape": {
        "population_size": 30, "max_generations": 150, "full_scale": False,
        "uncertainty": 0.0, "training_noise": 0.05, "mode": "additive_noise", "n_samples": 100,
    },
}

# fixed (F, CR) pairs for the multi-sample DE/rand/1/bin variants
MS_DE_PRESETS: dict[str, tuple[float, float]] = {
    "ms_de1": (0.9, 0.1),
    "ms_de2": (0.9, 0.9),
    "ms_de3": (0.5, 0.3),
}


class ConfigError(ValueError):
    """Invalid configuration, optionally tied to a source line."""

    def __init__(self, message: str, source: str = "", line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.source and self.line is not None:
            return f"{self.source}:{self.line}: {self.message}"
        if self.source:
            return f"{self.source}: {self.message}"
        return self.message


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

@dataclass
class AlgorithmSettings:
    name: str = "msms_de"
    preset: str | None = None              # ms_de1 | ms_de2 | ms_de3 (ms_de only)
    population_size: int | None = None
    max_generations: int | None = None
    F: float = 0.9
    CR: float = 0.1
    F_mean: float = 0.5
    F_std: float = 0.3
    CR_mean: float = 0.5
    CR_std: float = 0.1
    K: float = 0.5
    strategies: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    crossover_probability: float = 0.8
    mutation_probability: float = 0.05
    mutation_scale: float = 0.05
    tournament_size: int = 2
    elitism: int = 1


@dataclass
class GridSettings:
    uncertainty: float | None = None
    points: int = 3
    training_noise: float | None = None


@dataclass
class EnsembleSettings:
    backend: str = "bloch"
    phi: float = 0.0
    horizon: float = 10.0
    steps: int = 200
    control_min: float = -10.0
    control_max: float = 10.0
    substeps: int = 4
    free_frequency: float = 1.0
    decay_down: float = 0.1
    decay_up: float = 0.2
    dephasing: float = 0.2


@dataclass
class ConsensusSettings:
    couplings: list[float] = field(default_factory=lambda: [0.1, 0.1, 0.1])
    horizon: float = 20.0
    steps: int = 100
    control_min: float = 0.0
    control_max: float = 1.0


@dataclass
class SphereSettings:
    dimension: int = 30
    bound: float = 5.12


@dataclass
class LandscapeSettings:
    dimension: int = 80
    chirp: float = 3.0
    spectral_width: float = 0.25


@dataclass
class EvaluationSettings:
    n_samples: int | None = None
    seed: int = 2024
    mode: str | None = None
    noise_fraction: float = 0.075
    drift_horizon: float = 20.0
    drift_steps: int = 100
    consensus_tolerance: float = 0.02


@dataclass
class ExperimentConfig:
    """Complete experiment description loaded from YAML."""

    problem: str = "ensemble"
    seed: int = 7
    output_dir: str = "./runs/ensemble"
    threads: int = 1
    full_scale: bool = False
    log_every: int = 100
    algorithm: AlgorithmSettings = field(default_factory=AlgorithmSettings)
    grid: GridSettings = field(default_factory=GridSettings)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    consensus: ConsensusSettings = field(default_factory=ConsensusSettings)
    sphere: SphereSettings = field(default_factory=SphereSettings)
    landscape: LandscapeSettings = field(default_factory=LandscapeSettings)
    test: EvaluationSettings = field(default_factory=EvaluationSettings)

    # -- loading -----------------------------------------------------------

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        """Load and validate a YAML configuration file."""
        source = str(path)
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read configuration: {e}", source=source) from e
        return cls.from_text(text, source=source)

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> ExperimentConfig:
        try:
            data = yaml.safe_load(text) or {}
            lines = _key_lines(yaml.compose(text))
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", source, line) from e
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", source, 1)
        return cls.from_dict(data, source=source, lines=lines)

    @classmethod
    def from_dict(
        cls,
        data: dict[str, Any],
        source: str = "<config>",
        lines: dict[tuple[str, ...], int] | None = None,
    ) -> ExperimentConfig:
        config = cls()
        data = {k: v for k, v in data.items() if k != "design"}
        _apply_section(config, data, (), source, lines or {})
        config.validate(source, lines or {})
        return config

    # -- validation --------------------------------------------------------

    def validate(self, source: str = "<config>", lines: dict | None = None) -> None:
        lines = lines or {}

        def fail(message: str, *key: str) -> None:
            raise ConfigError(message, source, lines.get(tuple(key)))

        if self.problem not in PROBLEMS:
            fail(f"unknown problem {self.problem!r}; expected one of {', '.join(PROBLEMS)}", "problem")
        if self.algorithm.name not in ALGORITHMS:
            fail(
                f"unknown algorithm {self.algorithm.name!r}; expected one of {', '.join(ALGORITHMS)}",
                "algorithm", "name",
            )
        if self.algorithm.preset is not None and self.algorithm.preset not in MS_DE_PRESETS:
            fail(
                f"unknown preset {self.algorithm.preset!r}; expected one of {', '.join(MS_DE_PRESETS)}",
                "algorithm", "preset",
            )
        if self.threads < 1:
            fail(f"threads must be >= 1, got {self.threads}", "threads")
        if self.grid.points < 1:
            fail(f"points must be >= 1, got {self.grid.points}", "grid", "points")
        if self.grid.uncertainty is not None and not 0.0 <= self.grid.uncertainty <= 1.0:
            fail(f"uncertainty must lie in [0, 1], got {self.grid.uncertainty}", "grid", "uncertainty")
        if self.grid.training_noise is not None and not 0.0 <= self.grid.training_noise < 1.0:
            fail(
                f"training_noise must lie in [0, 1), got {self.grid.training_noise}",
                "grid", "training_noise",
            )
        if self.ensemble.backend not in BACKENDS:
            fail(f"unknown backend {self.ensemble.backend!r}; expected bloch or lindblad",
                 "ensemble", "backend")
        if self.ensemble.substeps < 1:
            fail("substeps must be >= 1", "ensemble", "substeps")
        if len(self.consensus.couplings) != 3:
            fail("couplings needs exactly three values (w12, w23, w13)", "consensus", "couplings")
        if self.test.mode is not None and self.test.mode not in TEST_MODES:
            fail(f"unknown test mode {self.test.mode!r}; expected uniform or additive_noise",
                 "test", "mode")
        if self.test.n_samples is not None and self.test.n_samples < 0:
            fail("n_samples must be >= 0", "test", "n_samples")
        if not 0.0 <= self.test.noise_fraction < 1.0:
            fail("noise_fraction must lie in [0, 1)", "test", "noise_fraction")
        if self.test.drift_steps < 1:
            fail("drift_steps must be >= 1", "test", "drift_steps")

    # -- resolution --------------------------------------------------------

    def resolve(self) -> ExperimentConfig:
        """Copy with every ``null`` filled from the problem presets and algorithm rules."""
        cfg = copy.deepcopy(self)
        defaults = PROBLEM_DEFAULTS[cfg.problem]
        alg = cfg.algorithm

        if alg.population_size is None:
            alg.population_size = defaults["population_size"]
        if alg.max_generations is None:
            scale_up = cfg.full_scale and defaults["full_scale"]
            alg.max_generations = FULL_SCALE_GENERATIONS if scale_up else defaults["max_generations"]
        if cfg.grid.uncertainty is None:
            cfg.grid.uncertainty = defaults["uncertainty"]
        if cfg.grid.training_noise is None:
            cfg.grid.training_noise = defaults["training_noise"]
        if cfg.test.n_samples is None:
            cfg.test.n_samples = defaults["n_samples"]
        if cfg.test.mode is None:
            cfg.test.mode = defaults["mode"]

        if alg.preset is not None:
            alg.F, alg.CR = MS_DE_PRESETS[alg.preset]
        if alg.name == "de1":
            cfg.grid.points = 1
            cfg.grid.training_noise = 0.0
        if alg.name != "msms_de":
            alg.strategies = [1]
        cfg.log_every = max(int(cfg.log_every), 0)
        return cfg

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        """Apply command-line overrides; ``None`` values are ignored."""
        cfg = copy.deepcopy(self)
        mapping = {
            "seed": ("seed",),
            "output_dir": ("output_dir",),
            "threads": ("threads",),
            "full_scale": ("full_scale",),
            "problem": ("problem",),
            "algorithm": ("algorithm", "name"),
            "max_generations": ("algorithm", "max_generations"),
            "n_samples": ("test", "n_samples"),
            "test_mode": ("test", "mode"),
            "test_seed": ("test", "seed"),
        }
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in mapping:
                raise ConfigError(f"unknown override {key!r}")
            *parents, leaf = mapping[key]
            target = cfg
            for p in parents:
                target = getattr(target, p)
            setattr(target, leaf, value)
        cfg.validate("<command line>")
        return cfg

    def optimizer_config(self) -> OptimizerConfig:
        alg = self.algorithm
        if alg.population_size is None or alg.max_generations is None:
            raise ConfigError("configuration must be resolved before building an optimizer")
        return OptimizerConfig(
            algorithm=alg.name,
            population_size=alg.population_size,
            max_generations=alg.max_generations,
            F=alg.F,
            CR=alg.CR,
            F_mean=alg.F_mean,
            F_std=alg.F_std,
            CR_mean=alg.CR_mean,
            CR_std=alg.CR_std,
            K=alg.K,
            strategies=tuple(alg.strategies),
            crossover_probability=alg.crossover_probability,
            mutation_probability=alg.mutation_probability,
            mutation_scale=alg.mutation_scale,
            tournament_size=alg.tournament_size,
            elitism=alg.elitism,
            log_every=self.log_every,
        )

    def to_dict(self) -> dict[str, Any]:
        return _section_dict(self)


def save_config(config: ExperimentConfig, path: str | Path, extra: dict[str, Any] | None = None) -> None:
    """Save configuration (plus optional extra top-level blocks) to a YAML file."""
    from qrobust.io.records import write_yaml

    data = config.to_dict()
    if extra:
        data.update(extra)
    write_yaml(data, path)


# ---------------------------------------------------------------------------
# Parse helpers
# ---------------------------------------------------------------------------

def _key_lines(node: yaml.Node | None, prefix: tuple[str, ...] = ()) -> dict[tuple[str, ...], int]:
    """1-based line of every mapping key, addressed by its key path."""
    lines: dict[tuple[str, ...], int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (str(key_node.value),)
            lines[path] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, path))
    return lines


def _coerce(value: Any, type_name: str, where: str) -> Any:
    optional = type_name.endswith("| None")
    base = type_name.replace("| None", "").strip()
    if value is None:
        if optional:
            return None
        raise ValueError(f"{where} must not be null")
    if base == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"{where} must be true or false, got {value!r}")
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where} must be an integer, got {value!r}")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a number, got {value!r}")
        return float(value)
    if base == "str":
        return str(value)
    if base.startswith("list["):
        item_type = base[5:-1]
        if not isinstance(value, list):
            raise ValueError(f"{where} must be a list, got {value!r}")
        return [_coerce(v, item_type, f"{where}[{i}]") for i, v in enumerate(value)]
    return value


def _apply_section(
    target: Any,
    data: dict[str, Any],
    prefix: tuple[str, ...],
    source: str,
    lines: dict[tuple[str, ...], int],
) -> None:
    known = {f.name: f for f in fields(target)}
    for key, value in data.items():
        path = prefix + (str(key),)
        where = ".".join(path)
        if key not in known:
            raise ConfigError(f"unknown key {where!r}", source, lines.get(path))
        current = getattr(target, key)
        if is_dataclass(current):
            if value is None:
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"{where} must be a mapping", source, lines.get(path))
            _apply_section(current, value, path, source, lines)
            continue
        try:
            setattr(target, key, _coerce(value, str(known[key].type), where))
        except ValueError as e:
            raise ConfigError(str(e), source, lines.get(path)) from e


def _section_dict(obj: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = _section_dict(value) if is_dataclass(value) else copy.deepcopy(value)
    return out
