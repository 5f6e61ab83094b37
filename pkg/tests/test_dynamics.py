"""Tests for the Lindblad, unitary and coherent-vector propagators."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from qrobust.core.dynamics import (
    DynamicsError,
    LindbladModel,
    PiecewiseConstantControl,
    batch_propagate_bloch,
    batch_propagate_lindblad,
    batch_propagate_unitary,
    build_bloch_system,
    lindblad_rhs,
    propagate_bloch,
    propagate_lindblad,
    propagate_unitary,
    rk4_amplification,
    rk4_transfer,
    step_propagators,
)
from qrobust.core.problems import consensus_controls, consensus_drift, ensemble_model
from qrobust.core.quantum_state import (
    DensityOperator,
    batch_coherent,
    generator_basis,
    pauli,
    to_coherent,
)


class TestPiecewiseConstantControl:
    def test_genome_is_channel_major(self):
        genome = np.arange(6.0)
        control = PiecewiseConstantControl.from_genome(genome, channels=2, dt=0.5)
        np.testing.assert_array_equal(control.values, [[0, 1, 2], [3, 4, 5]])
        assert control.horizon == pytest.approx(1.5)
        np.testing.assert_array_equal(control.to_genome(), genome)

    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            PiecewiseConstantControl(values=[[0.0, 2.0]], dt=1.0, bounds=[[0.0, 1.0]])

    def test_bad_split(self):
        with pytest.raises(ValueError):
            PiecewiseConstantControl.from_genome(np.zeros(5), channels=2, dt=1.0)

    def test_non_positive_step(self):
        with pytest.raises(ValueError):
            PiecewiseConstantControl(values=[[0.0]], dt=0.0)


class TestLindbladModel:
    def test_rejects_non_hermitian_hamiltonian(self):
        with pytest.raises(ValueError):
            LindbladModel(drift=np.array([[0, 1], [0, 0]]))

    def test_rate_count_must_match(self):
        with pytest.raises(ValueError):
            LindbladModel(drift=pauli("z"), jump_operators=[pauli("x")], rates=[1.0, 2.0])

    def test_closed_model(self):
        assert LindbladModel(drift=pauli("z"), controls=[pauli("x")]).is_closed
        assert not ensemble_model().is_closed

    def test_rhs_traceless_and_hermitian(self, random_state):
        model = ensemble_model()
        rho = random_state(2)
        drho = lindblad_rhs(rho, model.drift, model)
        assert abs(np.trace(drho)) < 1e-12
        np.testing.assert_allclose(drho, drho.conj().T, atol=1e-12)

    def test_rhs_of_closed_model_is_commutator(self, random_state):
        model = LindbladModel(drift=pauli("z"))
        rho = random_state(2).matrix
        expected = -1j * (pauli("z") @ rho - rho @ pauli("z"))
        np.testing.assert_allclose(lindblad_rhs(rho, model.drift, model), expected, atol=1e-12)


class TestLindbladPropagation:
    def setup_method(self):
        self.model = ensemble_model()
        self.rho0 = DensityOperator.basis_state(0, 2)

    def test_states_stay_physical(self, rng):
        values = rng.uniform(-10, 10, size=(8, 1, 40))
        thetas = rng.uniform(0.8, 1.2, size=(8, 2))
        states = batch_propagate_lindblad(self.model, values, thetas, self.rho0.matrix, 0.05)
        np.testing.assert_allclose(np.trace(states, axis1=1, axis2=2), 1.0, atol=1e-9)
        np.testing.assert_allclose(states, np.conj(np.swapaxes(states, 1, 2)), atol=1e-9)
        assert np.linalg.eigvalsh(states).min() > -1e-8

    def test_trajectory_recording(self):
        control = PiecewiseConstantControl(values=np.zeros((1, 5)), dt=0.1)
        final, trajectory = propagate_lindblad(self.model, control, [1.0, 1.0], self.rho0, trajectory=True)
        assert len(trajectory) == 6
        np.testing.assert_array_equal(trajectory[-1].matrix, final.matrix)
        np.testing.assert_array_equal(trajectory[0].matrix, self.rho0.matrix)

    def test_zero_control_relaxation(self):
        control = PiecewiseConstantControl(values=np.zeros((1, 200)), dt=0.05)
        final = propagate_lindblad(self.model, control, [1.0, 1.0], self.rho0)
        z = to_coherent(final, generator_basis(2)).components[2]
        assert z == pytest.approx(0.6 + 0.4 * np.exp(-0.5), abs=1e-6)

    def test_theta_length_checked(self):
        control = PiecewiseConstantControl(values=np.zeros((1, 2)), dt=0.1)
        with pytest.raises(ValueError):
            propagate_lindblad(self.model, control, [1.0], self.rho0)

    def test_non_finite_state_raises(self):
        values = np.full((1, 1, 2), 1e300)
        with np.errstate(all="ignore"), pytest.raises(DynamicsError):
            batch_propagate_lindblad(self.model, values, np.ones((1, 2)), self.rho0.matrix, 1.0, substeps=1)


class TestUnitaryPropagation:
    def test_step_propagator_matches_expm(self, rng):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = h + h.conj().T
        np.testing.assert_allclose(step_propagators(h[None], 0.3)[0], expm(-0.3j * h), atol=1e-12)

    def test_real_hamiltonians_match_expm(self, rng):
        drift, controls = consensus_drift(), consensus_controls()
        values = rng.uniform(0, 1, size=(1, 6, 5))
        rho = DensityOperator.basis_state(0, 8).matrix
        final = batch_propagate_unitary(drift, controls, values, np.ones((1, 7)), rho, 0.2)[0]
        for k in range(5):
            h = drift + sum(values[0, j, k] * term for j, term in enumerate(controls))
            u = expm(-0.2j * h)
            rho = u @ rho @ u.conj().T
        np.testing.assert_allclose(final, rho, atol=1e-12)

    def test_purity_and_spectrum_preserved(self, rng, random_state):
        controls = consensus_controls()
        values = rng.uniform(0, 1, size=(3, 6, 10))
        thetas = np.ones((3, 7))
        rho0 = random_state(8)
        finals = batch_propagate_unitary(consensus_drift(), controls, values, thetas, rho0.matrix, 0.2)
        for state in finals:
            assert np.real(np.trace(state @ state)) == pytest.approx(rho0.purity(), abs=1e-9)
            np.testing.assert_allclose(
                np.linalg.eigvalsh(state), np.linalg.eigvalsh(rho0.matrix), atol=1e-9
            )

    def test_consensus_state_is_stationary(self):
        rho = DensityOperator.uniform_superposition(8)
        control = PiecewiseConstantControl(values=np.zeros((6, 100)), dt=0.2)
        final = propagate_unitary(consensus_drift(), consensus_controls(), control, [1.0] * 7, rho)
        np.testing.assert_allclose(final.matrix, rho.matrix, atol=1e-9)

    def test_dimension_mismatch(self):
        control = PiecewiseConstantControl(values=np.zeros((6, 1)), dt=0.2)
        with pytest.raises(ValueError):
            propagate_unitary(
                consensus_drift(), consensus_controls(), control, [1.0] * 7,
                DensityOperator.maximally_mixed(2),
            )

    def test_batch_rows_independent(self, rng):
        values = rng.uniform(0, 1, size=(4, 6, 5))
        thetas = rng.uniform(0.98, 1.02, size=(4, 7))
        rho0 = DensityOperator.basis_state(0, 8).matrix
        together = batch_propagate_unitary(consensus_drift(), consensus_controls(), values, thetas, rho0, 0.2)
        alone = batch_propagate_unitary(
            consensus_drift(), consensus_controls(), values[2:3], thetas[2:3], rho0, 0.2
        )
        np.testing.assert_array_equal(together[2], alone[0])


class TestBlochSystem:
    def setup_method(self):
        self.basis = generator_basis(2)
        self.system = build_bloch_system(ensemble_model(), self.basis)

    def test_drift_coefficients(self):
        expected = np.array([[-0.045, -1.0, 0.0], [1.0, -0.045, 0.0], [0.0, 0.0, -0.05]])
        np.testing.assert_allclose(self.system.drift(1.0), expected, atol=1e-10)
        np.testing.assert_allclose(self.system.offset, [0.0, 0.0, 0.03], atol=1e-10)

    def test_drift_uncertainty_scales_rotation_only(self):
        m = self.system.drift(1.2)
        assert m[0, 1] == pytest.approx(-1.2)
        assert m[0, 0] == pytest.approx(-0.045)

    @pytest.mark.parametrize("phi", [0.0, 0.4, np.pi / 2])
    def test_control_block_magnitudes(self, phi):
        block = build_bloch_system(ensemble_model(phi=phi), self.basis).controls[0]
        c, s = 2 * np.cos(phi), 2 * np.sin(phi)
        np.testing.assert_allclose(np.abs(block[0, 2]), s, atol=1e-10)
        np.testing.assert_allclose(np.abs(block[1, 2]), c, atol=1e-10)
        np.testing.assert_allclose(block, -block.T, atol=1e-12)

    def test_matches_lindblad(self, rng):
        model = ensemble_model()
        rho0 = DensityOperator.basis_state(0, 2)
        values = rng.uniform(-10, 10, size=(5, 1, 50))
        thetas = rng.uniform(0.8, 1.2, size=(5, 2))
        y = batch_propagate_bloch(self.system, values, thetas, to_coherent(rho0, self.basis).components, 0.05)
        states = batch_propagate_lindblad(model, values, thetas, rho0.matrix, 0.05)
        np.testing.assert_allclose(y, batch_coherent(states, self.basis).real, atol=1e-8)

    def test_rk4_transfer_close_to_exponential(self):
        m = self.system.generator(np.array([1.0, 1.0]), np.array([0.5]))
        p, _ = rk4_transfer(m, 0.0125)
        np.testing.assert_allclose(p, expm(0.0125 * m), atol=1e-10)

    def test_unstable_step_raises(self):
        y0 = to_coherent(DensityOperator.basis_state(0, 2), self.basis).components
        values = np.full((2, 1, 8), 10.0)
        values[0] = 0.0
        with pytest.raises(DynamicsError, match="row 1"):
            batch_propagate_bloch(self.system, values, np.full((2, 2), 1.2), y0, 1.25)

    def test_amplification_marks_stability_limit(self):
        m = self.system.generator(np.array([1.0, 1.0]), np.array([10.0]))
        assert rk4_amplification(m, 0.05) <= 1.0
        assert rk4_amplification(m, 0.2) > 1.0

    def test_single_propagation_wrapper(self):
        control = PiecewiseConstantControl(values=np.zeros((1, 200)), dt=0.05)
        y0 = to_coherent(DensityOperator.basis_state(0, 2), self.basis)
        y = propagate_bloch(self.system, control, [1.0, 1.0], y0)
        assert y.components[2] == pytest.approx(0.6 + 0.4 * np.exp(-0.5), abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            build_bloch_system(ensemble_model(), generator_basis(3))


class TestIntegratorAccuracy:
    def setup_method(self):
        self.model = ensemble_model()
        self.basis = generator_basis(2)
        self.system = build_bloch_system(self.model, self.basis)
        self.rho0 = DensityOperator.basis_state(0, 2)
        self.y0 = to_coherent(self.rho0, self.basis)

    def _bloch(self, values, substeps):
        thetas = np.array([[1.1, 0.9]])
        return batch_propagate_bloch(self.system, values, thetas, self.y0.components, 1.0, substeps)[0]

    def _lindblad(self, values, substeps):
        thetas = np.array([[1.1, 0.9]])
        states = batch_propagate_lindblad(self.model, values, thetas, self.rho0.matrix, 1.0, substeps)
        return states[0].ravel()

    @pytest.mark.parametrize("backend", ["bloch", "lindblad"])
    def test_fourth_order_convergence(self, backend):
        run = self._bloch if backend == "bloch" else self._lindblad
        values = np.full((1, 1, 1), 2.0)
        coarse, mid, fine = (run(values, s) for s in (16, 32, 64))
        order = np.log2(np.abs(coarse - mid).max() / np.abs(mid - fine).max())
        assert 3.5 <= order <= 4.5

    def test_halving_substep_lindblad(self, rng):
        control = PiecewiseConstantControl(values=rng.uniform(-0.5, 0.5, size=(1, 40)), dt=0.05)
        a = propagate_lindblad(self.model, control, [1.1, 0.9], self.rho0, substeps=8)
        b = propagate_lindblad(self.model, control, [1.1, 0.9], self.rho0, substeps=16)
        assert np.abs(a.matrix - b.matrix).max() < 1e-8

    def test_halving_substep_bloch(self, rng):
        control = PiecewiseConstantControl(values=rng.uniform(-0.5, 0.5, size=(1, 40)), dt=0.05)
        a = propagate_bloch(self.system, control, [1.1, 0.9], self.y0, substeps=8)
        b = propagate_bloch(self.system, control, [1.1, 0.9], self.y0, substeps=16)
        assert np.abs(a.components - b.components).max() < 1e-8
