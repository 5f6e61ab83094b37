"""Robust-control problems and their averaged fitness.

A problem maps a batch of genomes and a batch of uncertainty tuples to a
matrix of fitness values (``sample_fitness``). Averaging over an
:class:`UncertaintySampleGrid` gives the robustness surrogate that the
optimizers maximise.

Instances
---------
* ``ensemble``         -- open two-level ensemble with inhomogeneous drift and
                          control strengths (theta_0, theta_1).
* ``consensus``        -- three coupled qubits steered to reduced-state
                          consensus under uncertain x/z control strengths.
* ``sphere``           -- deterministic benchmark, maximise ``-|x|^2``.
* ``noisy-landscape``  -- phase-only pulse shaping of a second-order signal,
                          trained against additive noise on the genome.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from qrobust.core.dynamics import (
    AMPLIFICATION_TOL,
    DEFAULT_SUBSTEPS,
    LindbladModel,
    batch_propagate_bloch,
    batch_propagate_lindblad,
    batch_propagate_unitary,
    build_bloch_system,
    rk4_amplification,
)
from qrobust.core.quantum_state import (
    CoherentVector,
    DensityOperator,
    batch_coherent,
    embed,
    generator_basis,
    pauli,
    tensor,
    to_coherent,
)
from qrobust.core.robustness import additive_noise_samples

# ---------------------------------------------------------------------------
# Uncertainty grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UncertaintySampleGrid:
    """Cartesian product of per-parameter samples in ``[1 - E, 1 + E]``."""

    uncertainty: float
    points: int
    values: tuple[float, ...]
    thetas: np.ndarray              # shape (N, n_params), lexicographic order

    def __len__(self) -> int:
        return self.thetas.shape[0]

    @property
    def n_params(self) -> int:
        return self.thetas.shape[1]


def make_grid(uncertainty: float, points: int, n_params: int) -> UncertaintySampleGrid:
    """Endpoints-inclusive equally spaced samples; ``points=1`` keeps only the nominal value."""
    if points < 1:
        raise ValueError(f"points must be >= 1, got {points}")
    if not 0.0 <= uncertainty <= 1.0:
        raise ValueError(f"Uncertainty bound must lie in [0, 1], got {uncertainty}")
    if n_params < 0:
        raise ValueError(f"n_params must be >= 0, got {n_params}")

    if points == 1:
        values: tuple[float, ...] = (1.0,)
    else:
        values = tuple(float(v) for v in np.linspace(1.0 - uncertainty, 1.0 + uncertainty, points))
    tuples = list(itertools.product(values, repeat=n_params))
    thetas = np.array(tuples, dtype=float).reshape(len(tuples), n_params)
    return UncertaintySampleGrid(uncertainty=uncertainty, points=points, values=values, thetas=thetas)


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------

def batch_fidelity(target: np.ndarray, reached: np.ndarray, n: int) -> np.ndarray:
    """``1 - n / (8 (n - 1)) * |y_f - y(T)|^2`` over the last axis."""
    diff = np.asarray(target, dtype=float) - np.asarray(reached, dtype=float)
    return 1.0 - n / (8.0 * (n - 1)) * np.sum(diff * diff, axis=-1)


def fidelity_objective(
    target: CoherentVector | np.ndarray,
    reached: CoherentVector | np.ndarray,
    n: int,
) -> float:
    a = target.components if isinstance(target, CoherentVector) else np.asarray(target)
    b = reached.components if isinstance(reached, CoherentVector) else np.asarray(reached)
    if a.shape != b.shape:
        raise ValueError(f"Coherent vectors differ in length: {a.shape} vs {b.shape}")
    if a.shape[-1] != n * n - 1:
        raise ValueError(f"Coherent vector length {a.shape[-1]} does not match n={n}")
    return float(batch_fidelity(a, b, n))


# ---------------------------------------------------------------------------
# Problem base class
# ---------------------------------------------------------------------------

class RobustControlProblem(ABC):
    """Bounded genome, uncertainty parameters and a batched fitness kernel."""

    name: str = ""
    param_names: tuple[str, ...] = ()

    def __init__(
        self,
        lower: Sequence[float] | np.ndarray,
        upper: Sequence[float] | np.ndarray,
        uncertainty: float = 0.0,
        channels: int = 1,
        dt: float = 1.0,
    ):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper bounds must be 1-D arrays of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self.uncertainty = float(uncertainty)
        self.channels = int(channels)
        self.dt = float(dt)

    # -- shape -------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def steps(self) -> int:
        return self.dim // self.channels

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lower, self.upper])

    @property
    def channel_labels(self) -> list[str]:
        return [f"c{j + 1}" for j in range(self.channels)]

    def make_training_grid(self, points: int) -> UncertaintySampleGrid:
        return make_grid(self.uncertainty, points, self.n_params)

    def nominal_params(self) -> np.ndarray:
        return np.ones((1, self.n_params))

    def as_params(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.ndim == 1:
            params = params[None]
        if params.ndim != 2 or params.shape[1] != self.n_params:
            raise ValueError(
                f"{self.name}: uncertainty rows need {self.n_params} entries, got shape {params.shape}"
            )
        return params

    def expand_thetas(self, params: np.ndarray) -> np.ndarray:
        """Per-term multipliers (theta_0, theta_1, ..., theta_M) for each uncertainty row."""
        return self.as_params(params)

    def check_genomes(self, genomes: np.ndarray) -> np.ndarray:
        genomes = np.atleast_2d(np.asarray(genomes, dtype=float))
        if genomes.shape[1] != self.dim:
            raise ValueError(f"{self.name}: genome has {genomes.shape[1]} values, expected {self.dim}")
        if np.any(genomes < self.lower) or np.any(genomes > self.upper):
            raise ValueError(f"{self.name}: genome entries outside bounds")
        return genomes

    # -- fitness -----------------------------------------------------------

    @abstractmethod
    def sample_fitness(self, genomes: np.ndarray, params: np.ndarray) -> np.ndarray:
        """Fitness of each genome row under each uncertainty row, shape (R, N)."""

    def fitness(
        self,
        genome: np.ndarray,
        grid: UncertaintySampleGrid | None = None,
    ) -> tuple[float, np.ndarray]:
        """``(average, per-sample)`` fitness of one genome over ``grid``."""
        params = grid.thetas if grid is not None else self.nominal_params()
        per_sample = self.sample_fitness(np.asarray(genome, dtype=float)[None], params)[0]
        return float(per_sample.mean()), per_sample

    def training_variants(
        self,
        genomes: np.ndarray,
        count: int,
        fraction: float,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Genome variants entering the averaged fitness, shape (P, S, D)."""
        genomes = np.atleast_2d(genomes)
        if fraction <= 0.0 or count <= 1:
            return genomes[:, None, :]
        return np.stack([
            additive_noise_samples(g, fraction, count, rng, self.lower, self.upper, mode="training")
            for g in genomes
        ])

    def design(self) -> dict[str, Any]:
        """Modelling conventions written to resolved configs and logged at start."""
        return {}


def _pair_rows(genomes: np.ndarray, params: np.ndarray, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Repeat genomes sample-minor and tile thetas so row ``r * N + k`` is (genome r, sample k)."""
    n = params.shape[0]
    return np.repeat(genomes, n, axis=0), np.tile(thetas, (genomes.shape[0], 1))


# ---------------------------------------------------------------------------
# Two-level ensemble
# ---------------------------------------------------------------------------

def ensemble_model(
    phi: float = 0.0,
    free_frequency: float = 1.0,
    decay_down: float = 0.1,
    decay_up: float = 0.2,
    dephasing: float = 0.2,
) -> LindbladModel:
    """Qubit with ``H = theta_0 (w/2) sigma_z + theta_1 u (cos phi sigma_x + sin phi sigma_y)``."""
    control = np.cos(phi) * pauli("x") + np.sin(phi) * pauli("y")
    jumps = [
        np.array([[0, 0], [decay_down, 0]], dtype=np.complex128),
        np.array([[0, decay_up], [0, 0]], dtype=np.complex128),
        np.array([[dephasing, 0], [0, 0]], dtype=np.complex128),
    ]
    return LindbladModel(
        drift=0.5 * free_frequency * pauli("z"),
        controls=[control],
        jump_operators=jumps,
        rates=[1.0, 1.0, 1.0],
    )


class EnsembleProblem(RobustControlProblem):
    """Drive an inhomogeneous open qubit ensemble from |0><0| to |1><1|."""

    name = "ensemble"
    param_names = ("theta_0", "theta_1")
    BACKENDS = ("bloch", "lindblad")

    def __init__(
        self,
        uncertainty: float = 0.2,
        phi: float = 0.0,
        horizon: float = 10.0,
        steps: int = 200,
        control_min: float = -10.0,
        control_max: float = 10.0,
        substeps: int = DEFAULT_SUBSTEPS,
        free_frequency: float = 1.0,
        decay_down: float = 0.1,
        decay_up: float = 0.2,
        dephasing: float = 0.2,
        backend: str = "bloch",
    ):
        if backend not in self.BACKENDS:
            raise ValueError(f"Unknown backend {backend!r}; expected one of {self.BACKENDS}")
        super().__init__(
            lower=np.full(steps, control_min),
            upper=np.full(steps, control_max),
            uncertainty=uncertainty,
            channels=1,
            dt=horizon / steps,
        )
        self.phi = phi
        self.horizon = horizon
        self.substeps = substeps
        self.backend = backend
        self.model = ensemble_model(phi, free_frequency, decay_down, decay_up, dephasing)
        self.basis = generator_basis(2)
        self.bloch = build_bloch_system(self.model, self.basis)
        self.initial_state = DensityOperator.basis_state(0, 2)
        self.target_state = DensityOperator.basis_state(1, 2)
        self.initial_vector = to_coherent(self.initial_state, self.basis)
        self.target_vector = to_coherent(self.target_state, self.basis)
        self._check_step_stability(control_min, control_max)

    @property
    def channel_labels(self) -> list[str]:
        return ["u"]

    def _check_step_stability(self, control_min: float, control_max: float) -> None:
        """Reject grids whose RK4 step leaves the stability region at the extreme controls.

        The generator is affine in the control and in both uncertainty factors,
        so the stiffest step sits on a corner of the box.
        """
        e = self.uncertainty
        corners = np.array(list(itertools.product((1.0 - e, 1.0 + e), repeat=2)))
        thetas = np.repeat(corners, 2, axis=0)
        amplitudes = np.tile([[control_min], [control_max]], (len(corners), 1))
        h = self.dt / self.substeps
        radius = float(rk4_amplification(self.bloch.generator(thetas, amplitudes), h).max())
        if radius > 1.0 + AMPLIFICATION_TOL:
            raise ValueError(
                f"RK4 step {h:.4g} is unstable for controls in [{control_min}, {control_max}] "
                f"(amplification {radius:.3f} per substep); increase steps or substeps"
            )

    def final_vectors(self, genomes: np.ndarray, params: np.ndarray) -> np.ndarray:
        """Coherent vectors at ``T`` for every (genome, sample) pair, shape (R * N, 3)."""
        rows, thetas = _pair_rows(genomes, params, self.expand_thetas(params))
        values = rows[:, None, :]
        if self.backend == "bloch":
            return batch_propagate_bloch(
                self.bloch, values, thetas, self.initial_vector.components, self.dt, self.substeps
            )
        states = batch_propagate_lindblad(
            self.model, values, thetas, self.initial_state.matrix, self.dt, self.substeps
        )
        return batch_coherent(states, self.basis).real

    def sample_fitness(self, genomes: np.ndarray, params: np.ndarray) -> np.ndarray:
        genomes = self.check_genomes(genomes)
        params = self.as_params(params)
        reached = self.final_vectors(genomes, params)
        values = batch_fidelity(self.target_vector.components, reached, 2)
        return values.reshape(genomes.shape[0], params.shape[0])

    def design(self) -> dict[str, Any]:
        return {
            "backend": self.backend,
            "control_axis_phi": self.phi,
            "integrator": f"RK4, {self.substeps} substeps per control step",
            "uncertain_terms": "theta_0 scales the sigma_z drift, theta_1 the control coupling",
            "bloch_control_orientation": "derived from the master equation (u -> -u relative to "
            "the textbook block, invariant under symmetric bounds)",
        }


def ensemble_fitness(
    genome: np.ndarray,
    problem: EnsembleProblem,
    grid: UncertaintySampleGrid | None = None,
) -> tuple[float, np.ndarray]:
    return problem.fitness(genome, grid)


# ---------------------------------------------------------------------------
# Three-qubit consensus network
# ---------------------------------------------------------------------------

N_QUBITS = 3
QUBIT_DIMS = (2, 2, 2)


def consensus_drift(couplings: Sequence[float] = (0.1, 0.1, 0.1)) -> np.ndarray:
    """``w12 XXI + w23 IXX + w13 XIX`` in rad/ns with hbar = 1."""
    w12, w23, w13 = couplings
    x = pauli("x")
    eye = np.eye(2)
    return w12 * tensor(x, x, eye) + w23 * tensor(eye, x, x) + w13 * tensor(x, eye, x)


def consensus_controls() -> list[np.ndarray]:
    """``sigma_x`` then ``sigma_z`` on each qubit in turn (channel-major genome order)."""
    controls = []
    for site in range(N_QUBITS):
        controls.append(embed(pauli("x"), site, N_QUBITS))
        controls.append(embed(pauli("z"), site, N_QUBITS))
    return controls


def consensus_initial_state() -> DensityOperator:
    """``|0><0| (x) |-><-| (x) |1><1|``."""
    zero = np.array([1.0, 0.0])
    one = np.array([0.0, 1.0])
    minus = np.array([1.0, -1.0]) / np.sqrt(2.0)
    return DensityOperator.pure(np.kron(np.kron(zero, minus), one))


class ConsensusProblem(RobustControlProblem):
    """Steer three coupled qubits to the consensus state ``(1/8) * all_ones(8)``."""

    name = "consensus"
    param_names = ("theta_x", "theta_z")

    def __init__(
        self,
        uncertainty: float = 0.02,
        couplings: Sequence[float] = (0.1, 0.1, 0.1),
        horizon: float = 20.0,
        steps: int = 100,
        control_min: float = 0.0,
        control_max: float = 1.0,
    ):
        self.drift = consensus_drift(couplings)
        self.controls = consensus_controls()
        super().__init__(
            lower=np.full(len(self.controls) * steps, control_min),
            upper=np.full(len(self.controls) * steps, control_max),
            uncertainty=uncertainty,
            channels=len(self.controls),
            dt=horizon / steps,
        )
        self.couplings = tuple(float(c) for c in couplings)
        self.horizon = horizon
        self.basis = generator_basis(8)
        self.initial_state = consensus_initial_state()
        self.target_state = DensityOperator.uniform_superposition(8)
        self.target_vector = to_coherent(self.target_state, self.basis)

    @property
    def channel_labels(self) -> list[str]:
        return [f"u{site + 1}{axis}" for site in range(N_QUBITS) for axis in ("x", "z")]

    def expand_thetas(self, params: np.ndarray) -> np.ndarray:
        """``(theta_x, theta_z)`` -> ``(1, theta_x, theta_z, theta_x, theta_z, theta_x, theta_z)``."""
        params = self.as_params(params)
        ones = np.ones((params.shape[0], 1))
        return np.hstack([ones] + [params] * N_QUBITS)

    def control_values(self, genomes: np.ndarray) -> np.ndarray:
        return np.asarray(genomes).reshape(-1, self.channels, self.steps)

    def final_states(self, genomes: np.ndarray, params: np.ndarray, observer=None) -> np.ndarray:
        rows, thetas = _pair_rows(genomes, params, self.expand_thetas(params))
        return batch_propagate_unitary(
            self.drift,
            self.controls,
            self.control_values(rows),
            thetas,
            self.initial_state.matrix,
            self.dt,
            observer=observer,
        )

    def sample_fitness(self, genomes: np.ndarray, params: np.ndarray) -> np.ndarray:
        genomes = self.check_genomes(genomes)
        params = self.as_params(params)
        states = self.final_states(genomes, params)
        reached = batch_coherent(states, self.basis).real
        values = batch_fidelity(self.target_vector.components, reached, 8)
        return values.reshape(genomes.shape[0], params.shape[0])

    def design(self) -> dict[str, Any]:
        return {
            "units": "hbar = 1, H in rad/ns, t in ns (no 2*pi factor)",
            "objective": "1 - n/(8(n-1)) |y_f - y(T)|^2 with n = 8 on full-state coherent vectors",
            "genome_layout": "channel-major: " + ", ".join(self.channel_labels),
            "uncertain_terms": "theta_x scales every sigma_x control, theta_z every sigma_z control; "
            "drift unscaled",
        }


def consensus_fitness(
    genome: np.ndarray,
    problem: ConsensusProblem,
    grid: UncertaintySampleGrid | None = None,
) -> tuple[float, np.ndarray]:
    return problem.fitness(genome, grid)


# ---------------------------------------------------------------------------
# Benchmarks without quantum dynamics
# ---------------------------------------------------------------------------

class SphereProblem(RobustControlProblem):
    name = "sphere"

    def __init__(self, dimension: int = 30, bound: float = 5.12):
        super().__init__(lower=np.full(dimension, -bound), upper=np.full(dimension, bound))

    @property
    def channel_labels(self) -> list[str]:
        return ["x"]

    def sample_fitness(self, genomes: np.ndarray, params: np.ndarray) -> np.ndarray:
        genomes = self.check_genomes(genomes)
        n = self.as_params(params).shape[0]
        values = -np.sum(genomes * genomes, axis=1)
        return np.repeat(values[:, None], n, axis=1)


class NoisyLandscapeProblem(RobustControlProblem):
    """Spectral phase shaping that maximises a normalised second-order signal.

    The field is ``E_k = A_k exp(i (phi_k + psi_k))`` with Gaussian amplitudes
    ``A_k`` and a fixed residual quadratic phase ``psi_k``. The signal is the
    energy of the self-convolution of ``E``; dividing by its flat-phase value
    keeps the fitness in ``[0, 1]``, reaching 1 once ``phi`` cancels ``psi``.
    """

    name = "noisy-landscape"

    def __init__(self, dimension: int = 80, chirp: float = 3.0, spectral_width: float = 0.25):
        super().__init__(lower=np.zeros(dimension), upper=np.full(dimension, 2.0 * np.pi))
        self.chirp = chirp
        self.spectral_width = spectral_width
        k = np.arange(dimension)
        center = 0.5 * (dimension - 1)
        self.amplitudes = np.exp(-(((k - center) / (spectral_width * dimension)) ** 2))
        self.residual_phase = 2.0 * np.pi * chirp * ((k - center) / dimension) ** 2
        self._n_fft = 2 * dimension
        self._reference = self._signal(self.amplitudes[None].astype(np.complex128))[0]

    @property
    def channel_labels(self) -> list[str]:
        return ["phase"]

    def _signal(self, fields: np.ndarray) -> np.ndarray:
        spectrum = np.fft.fft(fields, n=self._n_fft, axis=-1)
        harmonic = np.fft.ifft(spectrum * spectrum, axis=-1)
        return np.sum(np.abs(harmonic) ** 2, axis=-1)

    def sample_fitness(self, genomes: np.ndarray, params: np.ndarray) -> np.ndarray:
        genomes = self.check_genomes(genomes)
        n = self.as_params(params).shape[0]
        fields = self.amplitudes * np.exp(1j * (genomes + self.residual_phase))
        values = self._signal(fields) / self._reference
        return np.repeat(values[:, None], n, axis=1)

    def optimal_phase(self) -> np.ndarray:
        """A genome reaching fitness 1: the residual phase cancelled modulo 2 pi."""
        return np.mod(-self.residual_phase, 2.0 * np.pi)

    def design(self) -> dict[str, Any]:
        return {
            "signal": "self-convolution energy normalised by the flat-phase value",
            "residual_phase": f"2*pi*{self.chirp}*((k - c)/D)^2",
        }
