import math
import os
import tempfile
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.linalg import eigh as scipy_eigh
from threadpoolctl import threadpool_info

from core.exceptions import DegenerateGridError, DomainError, NumericalError
from lattice.boxes import LatticeBox
from lattice.percolation import PercolationConfig
from operators.matrices import SymmetricOperator, adjacency_operator, anderson_operator, heat_semigroup
from spectra.atoms import AtomicMeasure, max_interval_mass, point_part, point_part_exhaustive
from spectra.distributions import (
    DistributionFunction,
    cdf_distance,
    counting_function,
    laplace_agreement,
    laplace_transform,
    mixture,
    refine_grid,
)
from spectra.eigen import eigensystem, eigenvalues, verify_residuals


def lebesgue_discretization(points=1000):
    return np.linspace(0.0, 1.0, points), np.full(points, 1.0 / points)


class EigenvalueTests(SimpleTestCase):
    def test_zero_matrix(self):
        np.testing.assert_array_equal(eigenvalues(SymmetricOperator.from_dense(np.zeros((4, 4)))), np.zeros(4))

    def test_three_path(self):
        config = PercolationConfig(box=LatticeBox((3,)), p=1.0, seed=0, occupied=np.ones(3, dtype=bool))
        np.testing.assert_allclose(eigenvalues(adjacency_operator(config)), [-math.sqrt(2), 0, math.sqrt(2)], atol=1e-12)

    def test_trace_identity_and_residuals(self):
        op = anderson_operator(LatticeBox((12, 12)), -3, 3, 1, 21)
        values = eigenvalues(op, check_residuals=True)
        self.assertTrue(np.all(np.diff(values) >= 0))
        self.assertAlmostEqual(values.sum() / op.trace(), 1.0, delta=1e-9)

    def test_blas_runs_single_threaded(self):
        seen = []

        def recording_eigh(*args, **kwargs):
            seen.extend(pool['num_threads'] for pool in threadpool_info() if pool['user_api'] == 'blas')
            return scipy_eigh(*args, **kwargs)

        op = anderson_operator(LatticeBox((6, 6)), -1, 1, 1, 5)
        with mock.patch('spectra.eigen.eigh', side_effect=recording_eigh):
            values = eigenvalues(op)
        self.assertEqual(len(values), 36)
        self.assertTrue(seen)
        self.assertTrue(all(threads == 1 for threads in seen))

    def test_failure_dumps_matrix(self):
        bad = SymmetricOperator.from_dense([[np.nan, 0.0], [0.0, 1.0]])
        with tempfile.TemporaryDirectory() as tmp, override_settings(IDS_DUMP_DIR=tmp):
            with self.assertLogs('spectra.eigen', level='ERROR'):
                with self.assertRaises(NumericalError) as ctx:
                    eigenvalues(bad)
            self.assertTrue(os.path.exists(ctx.exception.dump_path))

    def test_residual_check_rejects_wrong_pairs(self):
        op = SymmetricOperator.from_dense([[2.0, 1.0], [1.0, 2.0]])
        values, vectors = eigensystem(op)
        with tempfile.TemporaryDirectory() as tmp, override_settings(IDS_DUMP_DIR=tmp):
            with self.assertLogs('spectra.eigen', level='ERROR'):
                with self.assertRaises(NumericalError):
                    verify_residuals(op, values[::-1], vectors)


class CountingFunctionTests(SimpleTestCase):
    def test_strict_counting(self):
        n = counting_function([-1.0, 0.0, 2.0], 3)
        self.assertAlmostEqual(n(0.0), 1 / 3)
        self.assertAlmostEqual(n.right_limit(0.0), 2 / 3)
        self.assertAlmostEqual(n(3.0), 1.0)
        self.assertEqual(n(-5.0), 0.0)

    def test_empty_spectrum(self):
        n = counting_function([], 5)
        self.assertEqual(n(100.0), 0.0)
        self.assertEqual(n.total_mass, 0.0)

    def test_multiplicity(self):
        n = counting_function([0.0, 0.0, 0.0], 3)
        np.testing.assert_array_equal(n.breakpoints, [0.0])
        np.testing.assert_array_equal(n.jump_weights, [1.0])

    def test_near_degenerate_eigenvalues_merge(self):
        n = counting_function([0.0, 1.0, 1.0 + 1e-12, 2.0], 4)
        np.testing.assert_array_equal(n.jump_weights, [0.25, 0.5, 0.25])

    def test_bad_normalization(self):
        with self.assertRaises(DomainError):
            counting_function([1.0], 0.0)

    def test_left_continuity_at_every_breakpoint(self):
        eigs = np.random.default_rng(0).normal(size=200)
        n = counting_function(eigs, 200)
        for k, lam in enumerate(n.breakpoints):
            self.assertEqual(n(lam), n.values[k])
            self.assertEqual(n(np.nextafter(lam, -np.inf)), n.values[k])
            self.assertEqual(n.right_limit(lam), n.values[k + 1])

    def test_block_diagonal_is_mass_weighted_sum(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        b = np.diag([-0.5, 0.25, 3.0])
        whole = SymmetricOperator.from_dense(np.block([[a, np.zeros((2, 3))], [np.zeros((3, 2)), b]]))
        parts = [counting_function(eigenvalues(SymmetricOperator.from_dense(m)), len(m)) for m in (a, b)]
        combined = mixture(parts, [2 / 5, 3 / 5])
        direct = counting_function(eigenvalues(whole), 5)
        np.testing.assert_allclose(combined.breakpoints, direct.breakpoints, atol=1e-14)
        np.testing.assert_allclose(combined.values, direct.values, atol=1e-14)

    def test_csv_round_trip(self):
        n = counting_function([-1.0, 0.5, 0.5, 2.0], 4)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'n.csv')
            n.write_csv(path, header_lines=['config_hash=abc'])
            with open(path, encoding='utf-8') as handle:
                self.assertEqual(handle.readline(), '# config_hash=abc\n')
                self.assertEqual(handle.readline().strip(), 'lambda,N_left,N_right')
            self.assertEqual(DistributionFunction.read_csv(path), n)


class LaplaceTests(SimpleTestCase):
    def test_single_atom(self):
        n = DistributionFunction.from_jumps([1.0], [2.0])
        self.assertAlmostEqual(laplace_transform(n, 1.0), 2 * math.exp(-1))

    def test_zero_measure(self):
        for t in (0.1, 1.0, 10.0):
            self.assertEqual(laplace_transform(DistributionFunction.zero(), t), 0.0)

    def test_decreasing_for_positive_mass(self):
        n = counting_function([0.5, 1.0, 3.0], 3)
        transforms = [laplace_transform(n, t) for t in (0.1, 0.5, 1.0, 2.0)]
        self.assertTrue(all(b < a for a, b in zip(transforms, transforms[1:])))

    def test_nonpositive_time(self):
        with self.assertRaises(DomainError):
            laplace_transform(DistributionFunction.zero(), 0.0)

    def test_matches_heat_trace(self):
        op = anderson_operator(LatticeBox((6, 6)), 0, 2, 1, 4)
        n = counting_function(eigenvalues(op), 36)
        for t in (0.3, 1.0, 2.5):
            trace = float(np.trace(heat_semigroup(op, t)))
            self.assertAlmostEqual(laplace_transform(n, t) * 36 / trace, 1.0, delta=1e-9)

    def test_agreement(self):
        n = counting_function([-1.0, 0.2, 0.7, 1.5], 4)
        grid = [0.5, 1.0, 2.0]
        self.assertEqual(laplace_agreement(n, n, grid), 0.0)
        self.assertAlmostEqual(laplace_agreement(n, n.scaled(2), grid), max(laplace_transform(n, t) for t in grid))
        delta = 0.3
        shifted = n.shifted(delta)
        for t in grid:
            gap = abs(laplace_transform(n, t) - laplace_transform(shifted, t))
            self.assertGreaterEqual(gap, laplace_transform(n, t) * (1 - math.exp(-t * delta)) - 1e-14)

    def test_shift_merges_breakpoints_one_ulp_apart(self):
        low = -1.9
        n = DistributionFunction([low, np.nextafter(low, 0.0)], [0.0, 0.25, 0.5])
        shifted = n.shifted(4.0)
        self.assertEqual(shifted.total_mass, 0.5)
        self.assertLessEqual(shifted.breakpoints.size, 2)
        self.assertTrue(np.all(np.diff(shifted.breakpoints) > 0))


class CdfDistanceTests(SimpleTestCase):
    def test_identical(self):
        n = counting_function([0.1, 0.4, 0.9], 3)
        self.assertEqual(cdf_distance(n, n, np.linspace(-1, 2, 31)).distance, 0.0)

    def test_constant_offset(self):
        n = counting_function(np.linspace(0, 1, 500), 500)
        result = cdf_distance(n, n.offset(0.125), np.linspace(-1, 2, 61))
        self.assertAlmostEqual(result.distance, 0.125)

    def test_steps_of_different_heights(self):
        first = DistributionFunction.from_jumps([0.0], [0.5])
        second = DistributionFunction.from_jumps([0.0], [0.75])
        below = cdf_distance(first, second, [-2.0, -1.0], radius=0.0)
        above = cdf_distance(first, second, [1.0, 2.0], radius=0.0)
        self.assertEqual(below.distance, 0.0)
        self.assertEqual(above.distance, 0.25)

    def test_jump_adjacent_points_are_excluded(self):
        first = DistributionFunction.from_jumps([0.0], [0.5])
        second = DistributionFunction.from_jumps([0.05], [0.5])
        result = cdf_distance(first, second, np.linspace(-1, 1, 21))
        self.assertEqual(result.distance, 0.0)
        self.assertIn(0.0, result.excluded)

    def test_all_points_excluded(self):
        n = DistributionFunction.from_jumps([0.0], [1.0])
        with self.assertRaises(DegenerateGridError):
            cdf_distance(n, n, [0.0, 0.01], radius=0.1)

    def test_refined_grid(self):
        grid = refine_grid(np.linspace(0, 1, 11), [0.5])
        self.assertIn(0.475, np.round(grid, 12))
        self.assertEqual(len(grid), 13)


class PointPartTests(SimpleTestCase):
    def test_single_jump(self):
        atoms = point_part(DistributionFunction.from_jumps([0.0], [1.0]), 3, 0.01, 0.01)
        np.testing.assert_array_equal(atoms.locations, [0.0])
        np.testing.assert_array_equal(atoms.weights, [1.0])

    def test_discretized_lebesgue_has_no_atoms(self):
        locations, weights = lebesgue_discretization()
        atoms = point_part(DistributionFunction.from_jumps(locations, weights), 10, 0.005, 0.01)
        self.assertEqual(len(atoms), 0)

    def test_mixed_measure(self):
        locations, weights = lebesgue_discretization()
        mixed = DistributionFunction.from_jumps(np.append(locations, 0.0), np.append(weights, 0.5))
        atoms = point_part(mixed, 10, 0.005, 0.01)
        self.assertEqual(len(atoms), 1)
        self.assertLess(abs(atoms.locations[0]), 0.005)
        self.assertGreaterEqual(atoms.weights[0], 0.5)
        self.assertLessEqual(atoms.weights[0], 0.506)

    def test_agrees_with_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        locations = np.sort(rng.uniform(0, 1, 40))
        weights = np.full(40, 0.002)
        weights[[5, 22]] = [0.3, 0.2]
        measure = DistributionFunction.from_jumps(locations, weights)
        greedy = point_part(measure, 4, 0.01, 0.05)
        exact = point_part_exhaustive(measure, 4, 0.01, 0.05)
        np.testing.assert_allclose(greedy.weights, exact.weights)
        np.testing.assert_allclose(greedy.locations, exact.locations, atol=0.01)
        supremum, _ = max_interval_mass(measure, 4, 0.01)
        self.assertLessEqual(greedy.certificate['captured_mass'], supremum + 1e-15)
        self.assertGreaterEqual(
            greedy.certificate['captured_mass'], supremum - greedy.certificate['largest_interval_mass'],
        )

    def test_idempotent_on_atoms(self):
        atoms = AtomicMeasure([-1.0, 0.0, 2.5], [0.2, 0.1, 0.05])
        again = point_part(atoms, 5, 0.01, 0.01)
        np.testing.assert_array_equal(again.locations, atoms.locations)
        np.testing.assert_allclose(again.weights, atoms.weights)

    def test_mass_never_exceeds_total(self):
        n = counting_function(np.random.default_rng(8).normal(size=300), 300)
        atoms = point_part(n, 20, 0.05, 1e-3)
        self.assertLessEqual(atoms.total, n.total_mass + 1e-12)

    def test_parameter_domains(self):
        with self.assertRaises(DomainError):
            point_part(DistributionFunction.zero(), 0, 0.1, 0.1)
        with self.assertRaises(DomainError):
            point_part(DistributionFunction.zero(), 1, 0.0, 0.1)

    def test_oracle_size_cap(self):
        with self.assertRaises(DomainError):
            max_interval_mass(counting_function(np.arange(60.0), 60), 1, 0.5)
