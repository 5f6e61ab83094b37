"""Analytic verification of the numerical core.

Every check measures a residual against a tolerance. The coherent-vector
coefficients of the two-level ensemble model, the invariance of the consensus
state under the free Hamiltonian and the closed-form zero-control relaxation
are reproduced from first principles here, independent of the test suite.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from qrobust.core.dynamics import (
    PiecewiseConstantControl,
    batch_propagate_bloch,
    batch_propagate_lindblad,
    batch_propagate_unitary,
    build_bloch_system,
    propagate_bloch,
    propagate_unitary,
    rk4_transfer,
)
from qrobust.core.problems import (
    ConsensusProblem,
    EnsembleProblem,
    batch_fidelity,
    consensus_drift,
    ensemble_model,
)
from qrobust.core.quantum_state import (
    DensityOperator,
    batch_coherent,
    batch_partial_trace,
    commutator,
    from_coherent,
    generator_basis,
    random_density_operator,
    to_coherent,
    trace_distance,
)
from qrobust.core.robustness import check_consensus
from qrobust.models import VerificationCheck, VerificationResult

# Reference coefficients of the two-level ensemble flow at theta_0 = 1
REFERENCE_DRIFT = np.array([
    [-0.045, -1.0, 0.0],
    [1.0, -0.045, 0.0],
    [0.0, 0.0, -0.05],
])
REFERENCE_OFFSET = np.array([0.0, 0.0, 0.03])


def reference_control_block(phi: float) -> np.ndarray:
    c, s = 2.0 * np.cos(phi), 2.0 * np.sin(phi)
    return np.array([
        [0.0, 0.0, -s],
        [0.0, 0.0, c],
        [s, -c, 0.0],
    ])


def relaxation_closed_form(horizon: float = 10.0) -> float:
    """``z(T)`` for ``dz/dt = -0.05 z + 0.03`` from ``z(0) = 1``."""
    return 0.6 + 0.4 * np.exp(-0.05 * horizon)


class CoreVerifier:
    """Run the analytic oracles and collect their residuals."""

    def __init__(self, seed: int = 12345, random_trials: int = 100):
        self.seed = seed
        self.random_trials = random_trials

    def verify(self) -> VerificationResult:
        rng = np.random.default_rng(self.seed)
        checks: list[VerificationCheck] = []
        checks.extend(self._verify_quantum_state(rng))
        checks.extend(self._verify_bloch_coefficients())
        checks.extend(self._verify_dynamics(rng))
        checks.extend(self._verify_consensus())
        checks.extend(self._verify_fidelity(rng))

        overall = "FAIL" if any(c.status == "FAIL" for c in checks) else "PASS"
        return VerificationResult(overall_status=overall, checks=checks)

    # ------------------------------------------------------------------
    # Quantum-state identities
    # ------------------------------------------------------------------

    def _verify_quantum_state(self, rng: np.random.Generator) -> list[VerificationCheck]:
        checks = []
        residual = 0.0
        for n in (2, 3, 4, 8):
            basis = generator_basis(n)
            traces = np.abs(np.einsum("lii->l", basis.generators))
            gram = basis.gram() - 2.0 * np.eye(len(basis))
            residual = max(residual, traces.max(), np.abs(gram).max())
        checks.append(VerificationCheck.measure(
            "Generator basis traceless and orthogonal (n = 2, 3, 4, 8)", "quantum_state",
            residual, 1e-12,
        ))

        purity = 0.0
        round_trip = 0.0
        for n in (2, 3, 4):
            basis = generator_basis(n)
            for _ in range(self.random_trials):
                rho = random_density_operator(n, rng)
                y = to_coherent(rho, basis)
                purity = max(purity, abs(y.norm_squared() - 2.0 * (rho.purity() - 1.0 / n)))
                back = from_coherent(y, basis)
                round_trip = max(round_trip, np.abs(back.matrix - rho.matrix).max())
        checks.append(VerificationCheck.measure(
            "Coherent-vector norm equals 2(tr rho^2 - 1/n)", "quantum_state", purity, 1e-9,
        ))
        checks.append(VerificationCheck.measure(
            "Coherent-vector round trip", "quantum_state", round_trip, 1e-12,
        ))

        plus = DensityOperator.pure([1.0, 1.0])
        zero = DensityOperator.basis_state(0, 2)
        checks.append(VerificationCheck.measure(
            "Trace distance |0> vs |+> equals 1/sqrt(2)", "quantum_state",
            abs(trace_distance(zero, plus) - 1.0 / np.sqrt(2.0)), 1e-12,
        ))
        return checks

    # ------------------------------------------------------------------
    # Coherent-vector coefficients of the ensemble model
    # ------------------------------------------------------------------

    def _verify_bloch_coefficients(self) -> list[VerificationCheck]:
        basis = generator_basis(2)
        system = build_bloch_system(ensemble_model(phi=0.0), basis)
        drift_residual = np.abs(system.drift(1.0) - REFERENCE_DRIFT).max()
        offset_residual = np.abs(system.offset - REFERENCE_OFFSET).max()

        theta0 = 1.17
        scaled = np.abs(
            system.drift(theta0) - (REFERENCE_DRIFT + (theta0 - 1.0) * system.coherent_drift)
        ).max()
        rotation = np.abs(system.coherent_drift - np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]])).max()

        # the derived block is the reference with the control sign flipped (u -> -u)
        control_residual = 0.0
        for phi in (0.0, 0.7, np.pi / 2):
            derived = build_bloch_system(ensemble_model(phi=phi), basis).controls[0]
            control_residual = max(control_residual, np.abs(derived + reference_control_block(phi)).max())

        return [
            VerificationCheck.measure(
                "Ensemble drift: damping -0.045, -0.045, -0.05 and rotation +-theta_0", "dynamics",
                max(drift_residual, scaled, rotation), 1e-10,
            ),
            VerificationCheck.measure(
                "Ensemble offset (0, 0, 0.03)", "dynamics", offset_residual, 1e-10,
            ),
            VerificationCheck.measure(
                "Ensemble control block +-2cos(phi), +-2sin(phi) (orientation u -> -u)",
                "dynamics", control_residual, 1e-10,
            ),
        ]

    # ------------------------------------------------------------------
    # Propagators
    # ------------------------------------------------------------------

    def _verify_dynamics(self, rng: np.random.Generator) -> list[VerificationCheck]:
        checks = []
        problem = EnsembleProblem(uncertainty=0.2)

        # zero-control relaxation, both backends
        zero = np.zeros((1, 1, problem.steps))
        nominal = np.ones((1, 2))
        y_bloch = batch_propagate_bloch(
            problem.bloch, zero, nominal, problem.initial_vector.components, problem.dt
        )[0]
        rho = batch_propagate_lindblad(problem.model, zero, nominal, problem.initial_state.matrix, problem.dt)
        y_lindblad = batch_coherent(rho, problem.basis).real[0]
        expected = np.array([0.0, 0.0, relaxation_closed_form(problem.horizon)])
        checks.append(VerificationCheck.measure(
            "Zero-control relaxation z(T) = 0.6 + 0.4 exp(-0.5)", "dynamics",
            max(np.abs(y_bloch - expected).max(), np.abs(y_lindblad - expected).max()), 1e-6,
        ))

        # backend agreement on random controls and uncertainty samples
        count = self.random_trials
        values = rng.uniform(-10.0, 10.0, size=(count, 1, problem.steps))
        thetas = rng.uniform(0.8, 1.2, size=(count, 2))
        y_bloch = batch_propagate_bloch(
            problem.bloch, values, thetas, problem.initial_vector.components, problem.dt
        )
        states = batch_propagate_lindblad(
            problem.model, values, thetas, problem.initial_state.matrix, problem.dt
        )
        y_lindblad = batch_coherent(states, problem.basis).real
        checks.append(VerificationCheck.measure(
            "Coherent-vector and density-matrix backends agree", "dynamics",
            np.abs(y_bloch - y_lindblad).max(), 1e-8,
        ))

        herm = np.abs(states - np.conj(np.swapaxes(states, -1, -2))).max()
        trace = np.abs(np.trace(states, axis1=-2, axis2=-1) - 1.0).max()
        min_eig = np.linalg.eigvalsh(states).min()
        checks.append(VerificationCheck.measure(
            "Lindblad states Hermitian with unit trace", "dynamics", max(herm, trace), 1e-9,
        ))
        checks.append(VerificationCheck.measure(
            "Lindblad states positive (min eigenvalue >= -1e-8)", "dynamics", max(-min_eig, 0.0), 1e-8,
        ))

        # RK4 transfer against the exact affine exponential on one constant segment
        u, theta = 0.5, np.array([1.1, 0.9])
        m = problem.bloch.generator(theta, np.array([u]))
        h = problem.dt / 4
        p, q = rk4_transfer(m, h)
        augmented = np.zeros((4, 4))
        augmented[:3, :3] = m
        augmented[:3, 3] = problem.bloch.offset
        exact = expm(h * augmented)
        checks.append(VerificationCheck.measure(
            "RK4 step matches the exact exponential on a constant segment", "dynamics",
            max(np.abs(p - exact[:3, :3]).max(), np.abs(q @ problem.bloch.offset - exact[:3, 3]).max()),
            1e-8,
        ))

        # closed-system purity and spectrum
        consensus = ConsensusProblem()
        fields = rng.uniform(0.0, 1.0, size=(count, consensus.channels, consensus.steps))
        strengths = consensus.expand_thetas(rng.uniform(0.98, 1.02, size=(count, 2)))
        rho0 = random_density_operator(8, rng)
        finals = batch_propagate_unitary(
            consensus.drift, consensus.controls, fields, strengths, rho0.matrix, consensus.dt
        )
        purity = np.real(np.einsum("bij,bji->b", finals, finals))
        spectrum = np.abs(
            np.sort(np.linalg.eigvalsh(finals), axis=-1) - np.sort(np.linalg.eigvalsh(rho0.matrix))
        ).max()
        checks.append(VerificationCheck.measure(
            "Unitary propagation preserves purity", "dynamics",
            np.abs(purity - rho0.purity()).max(), 1e-9,
        ))
        checks.append(VerificationCheck.measure(
            "Unitary propagation preserves the spectrum", "dynamics", spectrum, 1e-8,
        ))

        # the Bloch propagator on the nominal sample reproduces the problem's fitness kernel
        y = propagate_bloch(
            problem.bloch,
            PiecewiseConstantControl(values=values[0], dt=problem.dt),
            [1.0, 1.0],
            problem.initial_vector,
        )
        kernel = problem.final_vectors(values[0], np.ones((1, 2)))[0]
        checks.append(VerificationCheck.measure(
            "Single-trajectory and batched propagators agree", "dynamics",
            np.abs(y.components - kernel).max(), 1e-12,
        ))
        return checks

    # ------------------------------------------------------------------
    # Consensus state
    # ------------------------------------------------------------------

    def _verify_consensus(self) -> list[VerificationCheck]:
        problem = ConsensusProblem()
        target = problem.target_state
        half = np.full((2, 2), 0.5)
        reduced = max(
            np.abs(batch_partial_trace(target.matrix, (2, 2, 2), k) - half).max() for k in range(3)
        )
        drift = consensus_drift()
        commutes = np.abs(commutator(drift, target.matrix)).max()

        free = PiecewiseConstantControl(values=np.zeros((problem.channels, problem.steps)), dt=problem.dt)
        evolved = propagate_unitary(drift, problem.controls, free, [1.0] * 7, target)
        invariance = np.abs(evolved.matrix - target.matrix).max()

        agreement = check_consensus(target, (2, 2, 2))
        initial = problem.initial_state
        vectors = np.array([
            to_coherent(
                DensityOperator(batch_partial_trace(initial.matrix, (2, 2, 2), k)), generator_basis(2)
            ).components
            for k in range(3)
        ])
        expected = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])

        zero_fitness, _ = problem.fitness(np.zeros(problem.dim))
        return [
            VerificationCheck.measure(
                "Reduced states of the consensus state equal all_ones(2)/2", "problems", reduced, 1e-12,
            ),
            VerificationCheck.measure(
                "Free Hamiltonian commutes with the consensus state", "problems", commutes, 1e-12,
            ),
            VerificationCheck.measure(
                "Consensus state invariant under free evolution (T = 20)", "problems", invariance, 1e-9,
            ),
            VerificationCheck.measure(
                "Consensus state passes the consensus check", "problems",
                max(agreement.distances.values()), 1e-12,
            ),
            VerificationCheck.measure(
                "Initial qubit Bloch vectors (0,0,1), (-1,0,0), (0,0,-1)", "problems",
                np.abs(vectors - expected).max(), 1e-12,
            ),
            VerificationCheck.measure(
                "Zero-control consensus fitness equals 3/7", "problems",
                abs(zero_fitness - 3.0 / 7.0), 1e-9,
            ),
        ]

    # ------------------------------------------------------------------
    # Objective bounds
    # ------------------------------------------------------------------

    def _verify_fidelity(self, rng: np.random.Generator) -> list[VerificationCheck]:
        excess = 0.0
        for n in (2, 8):
            basis = generator_basis(n)
            for _ in range(self.random_trials):
                a = to_coherent(random_density_operator(n, rng, rank=1), basis).components
                b = to_coherent(random_density_operator(n, rng), basis).components
                value = float(batch_fidelity(a, b, n))
                excess = max(excess, -value, value - 1.0)
        return [VerificationCheck.measure(
            "Fidelity objective within [0, 1] on valid states", "problems", max(excess, 0.0), 1e-12,
        )]


def run_verification(seed: int = 12345) -> VerificationResult:
    return CoreVerifier(seed=seed).verify()
