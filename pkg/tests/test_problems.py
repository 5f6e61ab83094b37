"""Tests for uncertainty grids, the fidelity objective and the problem instances."""

from __future__ import annotations

import numpy as np
import pytest

from qrobust.core.problems import (
    ConsensusProblem,
    EnsembleProblem,
    NoisyLandscapeProblem,
    SphereProblem,
    batch_fidelity,
    consensus_fitness,
    consensus_initial_state,
    ensemble_fitness,
    fidelity_objective,
    make_grid,
)
from qrobust.core.quantum_state import (
    DensityOperator,
    batch_partial_trace,
    generator_basis,
    to_coherent,
)


class TestUncertaintyGrid:
    def test_three_points_two_params(self):
        grid = make_grid(0.2, 3, 2)
        assert len(grid) == 9
        np.testing.assert_allclose(grid.values, [0.8, 1.0, 1.2])
        # lexicographic: second parameter varies fastest
        np.testing.assert_allclose(grid.thetas[:3], [[0.8, 0.8], [0.8, 1.0], [0.8, 1.2]])

    def test_single_point_is_nominal(self):
        grid = make_grid(0.2, 1, 2)
        np.testing.assert_array_equal(grid.thetas, [[1.0, 1.0]])

    def test_zero_parameters(self):
        grid = make_grid(0.0, 3, 0)
        assert grid.thetas.shape == (1, 0)

    @pytest.mark.parametrize("args", [(0.2, 0, 2), (1.5, 3, 2), (0.2, 3, -1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            make_grid(*args)


class TestFidelity:
    def test_identical_states(self):
        y = to_coherent(consensus_initial_state(), generator_basis(8)).components
        assert fidelity_objective(y, y, 8) == pytest.approx(1.0)

    def test_orthogonal_qubit_states(self):
        assert fidelity_objective(np.array([0, 0, 1.0]), np.array([0, 0, -1.0]), 2) == pytest.approx(0.0)

    def test_within_unit_interval(self, random_state):
        basis = generator_basis(3)
        for _ in range(10):
            a = to_coherent(random_state(3, rank=1), basis).components
            b = to_coherent(random_state(3), basis).components
            assert 0.0 <= fidelity_objective(a, b, 3) <= 1.0

    def test_length_checks(self):
        with pytest.raises(ValueError):
            fidelity_objective(np.zeros(3), np.zeros(8), 2)
        with pytest.raises(ValueError):
            fidelity_objective(np.zeros(8), np.zeros(8), 2)

    def test_batched(self):
        target = np.array([0.0, 0.0, -1.0])
        reached = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(batch_fidelity(target, reached, 2), [1.0, 0.0])


class TestEnsembleProblem:
    def test_dimensions_and_bounds(self):
        problem = EnsembleProblem()
        assert problem.dim == 200
        assert problem.dt == pytest.approx(0.05)
        np.testing.assert_array_equal(problem.bounds[0], [-10.0, 10.0])
        assert problem.channel_labels == ["u"]

    def test_zero_control_fitness(self):
        problem = EnsembleProblem()
        value, per_sample = problem.fitness(np.zeros(problem.dim))
        z = 0.6 + 0.4 * np.exp(-0.5)
        assert value == pytest.approx(1.0 - 0.25 * (1.0 + z) ** 2, abs=1e-6)
        assert value == pytest.approx(0.1512, abs=1e-4)
        assert per_sample.shape == (1,)

    def test_grid_average(self, small_ensemble, rng):
        genome = rng.uniform(-10, 10, small_ensemble.dim)
        grid = small_ensemble.make_training_grid(3)
        mean, per_sample = ensemble_fitness(genome, small_ensemble, grid)
        assert per_sample.shape == (9,)
        assert mean == pytest.approx(per_sample.mean())

    def test_backends_agree(self, rng):
        bloch = EnsembleProblem(steps=25)
        lindblad = EnsembleProblem(steps=25, backend="lindblad")
        genomes = rng.uniform(-10, 10, size=(3, 25))
        params = bloch.make_training_grid(3).thetas
        np.testing.assert_allclose(
            bloch.sample_fitness(genomes, params), lindblad.sample_fitness(genomes, params), atol=1e-8
        )

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            EnsembleProblem(backend="spectral")

    def test_unstable_step_rejected(self):
        with pytest.raises(ValueError, match="unstable"):
            EnsembleProblem(steps=20)
        EnsembleProblem(steps=20, substeps=8)

    def test_fitness_stays_physical(self, small_ensemble, rng):
        genomes = rng.choice([-10.0, 10.0], size=(4, small_ensemble.dim))
        fitness = small_ensemble.sample_fitness(genomes, small_ensemble.make_training_grid(3).thetas)
        assert np.all((fitness >= -1e-6) & (fitness <= 1.0))

    def test_genome_checks(self, small_ensemble):
        with pytest.raises(ValueError):
            small_ensemble.sample_fitness(np.zeros((1, 5)), [[1.0, 1.0]])
        with pytest.raises(ValueError):
            small_ensemble.sample_fitness(np.full((1, small_ensemble.dim), 11.0), [[1.0, 1.0]])
        with pytest.raises(ValueError):
            small_ensemble.sample_fitness(np.zeros((1, small_ensemble.dim)), [[1.0]])

    def test_design_metadata(self, small_ensemble):
        design = small_ensemble.design()
        assert design["backend"] == "bloch"
        assert "u -> -u" in design["bloch_control_orientation"]


class TestConsensusProblem:
    def test_dimensions(self):
        problem = ConsensusProblem()
        assert problem.dim == 600
        assert problem.channels == 6
        assert problem.channel_labels == ["u1x", "u1z", "u2x", "u2z", "u3x", "u3z"]
        np.testing.assert_array_equal(problem.bounds[0], [0.0, 1.0])

    def test_expand_thetas(self, small_consensus):
        expanded = small_consensus.expand_thetas(np.array([[0.99, 1.01]]))
        np.testing.assert_allclose(expanded, [[1.0, 0.99, 1.01, 0.99, 1.01, 0.99, 1.01]])

    def test_initial_reduced_states(self):
        rho = consensus_initial_state().matrix
        basis = generator_basis(2)
        expected = [[0, 0, 1], [-1, 0, 0], [0, 0, -1]]
        for k in range(3):
            y = to_coherent(DensityOperator(batch_partial_trace(rho, (2, 2, 2), k)), basis)
            np.testing.assert_allclose(y.components, expected[k], atol=1e-12)

    def test_zero_control_fitness(self):
        problem = ConsensusProblem()
        value, _ = consensus_fitness(np.zeros(problem.dim), problem)
        assert value == pytest.approx(3.0 / 7.0, abs=1e-9)

    def test_fitness_bounded(self, small_consensus, rng):
        genomes = rng.uniform(0, 1, size=(4, small_consensus.dim))
        values = small_consensus.sample_fitness(genomes, small_consensus.make_training_grid(3).thetas)
        assert values.shape == (4, 9)
        assert np.all(values <= 1.0 + 1e-12)
        assert np.all(values >= -1e-12)

    def test_row_order(self, small_consensus, rng):
        genomes = rng.uniform(0, 1, size=(3, small_consensus.dim))
        params = small_consensus.make_training_grid(3).thetas
        together = small_consensus.sample_fitness(genomes, params)
        for r in range(3):
            np.testing.assert_array_equal(together[r], small_consensus.sample_fitness(genomes[r], params)[0])


class TestBenchmarks:
    def test_sphere(self):
        problem = SphereProblem(dimension=3)
        values = problem.sample_fitness(np.array([[1.0, 2.0, 0.0]]), problem.make_training_grid(3).thetas)
        np.testing.assert_allclose(values, [[-5.0]])
        assert problem.fitness(np.zeros(3))[0] == 0.0

    def test_landscape_optimum(self):
        problem = NoisyLandscapeProblem(dimension=40)
        value, _ = problem.fitness(problem.optimal_phase())
        assert value == pytest.approx(1.0, abs=1e-9)

    def test_landscape_bounded(self, rng):
        problem = NoisyLandscapeProblem(dimension=40)
        genomes = rng.uniform(0, 2 * np.pi, size=(20, 40))
        values = problem.sample_fitness(genomes, problem.nominal_params())
        assert np.all(values > 0.0)
        assert np.all(values <= 1.0 + 1e-12)

    def test_landscape_chirp_lowers_flat_genome(self):
        problem = NoisyLandscapeProblem(dimension=40)
        assert problem.fitness(np.zeros(40))[0] < 0.9

    def test_training_variants(self, rng):
        problem = NoisyLandscapeProblem(dimension=10)
        genomes = rng.uniform(0, 2 * np.pi, size=(4, 10))
        variants = problem.training_variants(genomes, 3, 0.05, rng)
        assert variants.shape == (4, 3, 10)
        np.testing.assert_array_equal(variants[:, 0], genomes)
        assert problem.training_variants(genomes, 3, 0.0, rng).shape == (4, 1, 10)
