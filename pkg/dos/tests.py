import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from core.exceptions import ConfigError, DomainError, OperatorSizeError, StatisticsError
from dos.abstract import PADDING_CHECK_SKIPPED, abstract_dos
from dos.checks import boundary_independence, laplace_route_check, trace_formula_check, uniqueness_check
from dos.clusters import canonical, cluster_atom_oracle, fixed_animals, ids_jump_compare, site_perimeter
from dos.exhaustion import (
    BOUNDED,
    EMPTY,
    INFINITE,
    OCCUPIED,
    dichotomy_check,
    empirical_ids,
    self_averaging_report,
    spectrum_constancy_report,
)
from dos.parallel import run_parallel
from lattice.boxes import LatticeBox, folner_boxes
from operators.ensembles import OperatorEnsembleSpec
from spectra.distributions import counting_function


def percolation(p, d, seed=0, model='percolation-adjacency'):
    return OperatorEnsembleSpec(model=model, dimension=d, p=p, base_seed=seed)


def free_path_function(n):
    return counting_function(2 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1)), n)


class ExhaustionTests(SimpleTestCase):
    def test_free_chain_median_is_zero(self):
        ids = empirical_ids(percolation(1.0, 1), folner_boxes(1, 3, [50, 100, 200]), 1, lambda_grid=[-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(ids.mean[:, 1], [0.5, 0.5, 0.5])
        np.testing.assert_array_equal(ids.std, np.zeros_like(ids.std))

    def test_free_chain_matches_closed_form(self):
        n = 200
        grid = np.linspace(-2.1, 2.1, 301) + 1e-7
        ids = empirical_ids(percolation(1.0, 1), folner_boxes(1, 1, [n]), 1, lambda_grid=grid)
        np.testing.assert_allclose(ids.mean[-1], free_path_function(n)(grid), atol=1e-12)

    def test_empty_model(self):
        ids = empirical_ids(percolation(0.0, 2), folner_boxes(2, 2, [4, 8]), 3)
        self.assertFalse(ids.mean.any())

    @override_settings(IDS_DENSE_THRESHOLD=50)
    def test_size_guard_names_the_scale(self):
        with self.assertRaises(OperatorSizeError) as ctx:
            empirical_ids(percolation(0.5, 2), folner_boxes(2, 2, [6, 8]), 1)
        self.assertEqual(ctx.exception.scale, 1)

    def test_normalization_modes(self):
        folner = folner_boxes(2, 1, [12])
        grid = [-5.0, 5.0]
        volume = empirical_ids(percolation(0.4, 2), folner, 30, lambda_grid=grid)
        occupied = empirical_ids(percolation(0.4, 2), folner, 30, normalization=OCCUPIED, lambda_grid=grid)
        np.testing.assert_array_equal(occupied.mean[-1], [0.0, 1.0])
        self.assertLess(abs(volume.mean[-1][1] - 0.4), 4 * math.sqrt(0.24 / (144 * 30)))
        self.assertTrue(all(f.top <= 1.0 for f in volume.functions[-1]))

    def test_mean_curve_is_monotone(self):
        ids = empirical_ids(percolation(0.6, 2, seed=4), folner_boxes(2, 2, [6, 10]), 5)
        self.assertTrue(np.all(np.diff(ids.mean, axis=1) >= 0))

    def test_worker_count_does_not_change_results(self):
        spec = percolation(0.5, 2, seed=9)
        folner = folner_boxes(2, 2, [6, 10])
        grid = np.linspace(-4, 4, 65)
        serial = empirical_ids(spec, folner, 4, lambda_grid=grid, workers=1)
        pooled = empirical_ids(spec, folner, 4, lambda_grid=grid, workers=2)
        np.testing.assert_array_equal(serial.mean, pooled.mean)
        np.testing.assert_array_equal(serial.std, pooled.std)

    def test_folner_choice_independence(self):
        grid = np.linspace(-3.5, 3.5, 29) + 1e-3
        spec = percolation(0.7, 2, seed=1)
        cubes = empirical_ids(spec, folner_boxes(2, 1, [16]), 20, lambda_grid=grid)
        rectangles = empirical_ids(spec, folner_boxes(2, 1, [8], aspect=(4, 2)), 20, lambda_grid=grid)
        stderr = np.hypot(cubes.stderr(), rectangles.stderr())
        self.assertTrue(np.all(np.abs(cubes.mean[-1] - rectangles.mean[-1]) <= 3 * stderr + 4 / 16))

    def test_run_parallel_keeps_order(self):
        self.assertEqual(run_parallel(pow, [(2, k) for k in range(6)], workers=2), [1, 2, 4, 8, 16, 32])


class DiagnosticsTests(SimpleTestCase):
    def test_deterministic_ensemble_has_no_spread(self):
        ids = empirical_ids(percolation(1.0, 1), folner_boxes(1, 2, [20, 40]), 20, lambda_grid=np.linspace(-2, 2, 33))
        self.assertFalse(ids.std.any())
        np.testing.assert_array_equal(ids.mean[-1], ids.functions[-1][0](ids.lambda_grid))
        report = self_averaging_report(ids)
        self.assertFalse(report.std.any())
        self.assertTrue(report.passed)

    def test_too_few_realizations(self):
        ids = empirical_ids(percolation(0.5, 1), folner_boxes(1, 1, [10]), 1)
        with self.assertRaises(StatisticsError):
            self_averaging_report(ids)
        with self.assertRaises(StatisticsError):
            spectrum_constancy_report(ids)

    def test_standard_deviation_halves_when_volume_quadruples(self):
        ids = empirical_ids(percolation(0.5, 2, seed=3), folner_boxes(2, 2, [10, 20]), 40)
        ratio = self_averaging_report(ids).ratios[0]
        self.assertEqual(ratio['expected'], 0.5)
        self.assertLess(abs(ratio['observed'] - 0.5), 0.2)

    def test_dichotomy(self):
        free = empirical_ids(percolation(1.0, 1), folner_boxes(1, 3, [20, 40, 80]), 1)
        self.assertEqual(dichotomy_check(free, (2.5, 3.0)).classification, EMPTY)
        inside = dichotomy_check(free, (-1.0, 1.0))
        self.assertEqual(inside.classification, INFINITE)
        self.assertAlmostEqual(inside.slope, 1 / 3, delta=0.02)

        diluted = empirical_ids(percolation(0.6, 2, seed=2), folner_boxes(2, 3, [6, 12, 24]), 4)
        report = dichotomy_check(diluted, (-0.01, 0.01))
        self.assertEqual(report.classification, INFINITE)
        self.assertNotEqual(report.classification, BOUNDED)
        with self.assertRaises(DomainError):
            dichotomy_check(free, (1.0, 1.0))

    def test_constancy_of_deterministic_spectrum(self):
        ids = empirical_ids(percolation(1.0, 1), folner_boxes(1, 2, [30, 60]), 10)
        report = spectrum_constancy_report(ids)
        self.assertEqual(report.max_distance, [0.0, 0.0])
        self.assertLessEqual(report.support_gap, report.grid_pitch)

    def test_random_spectra_are_close(self):
        ids = empirical_ids(percolation(0.5, 2, seed=6), folner_boxes(2, 2, [8, 16]), 10)
        report = spectrum_constancy_report(ids)
        self.assertLessEqual(report.support_gap, report.grid_pitch + 1e-12)
        self.assertTrue(all(math.isfinite(d) for d in report.max_distance))


class AbstractDosTests(SimpleTestCase):
    def test_free_chain(self):
        dos = abstract_dos(percolation(1.0, 1), [0.0, 3.0], 30, LatticeBox((2,), (-1,)), 1, check_padding=False)
        self.assertAlmostEqual(dos.values[0] / dos.domain_volume, 0.5, places=12)
        self.assertAlmostEqual(dos.values[1] / dos.domain_volume, 1.0, places=12)

    def test_trace_of_identity_is_p(self):
        box = LatticeBox.centered((4, 4))
        for p in (0.3, 0.7):
            dos = abstract_dos(percolation(p, 2, seed=11), [10.0], 2, box, 200, check_padding=False)
            per_site = dos.tau_identity / dos.domain_volume
            stderr = dos.tau_identity_stderr / dos.domain_volume
            self.assertLessEqual(stderr, 0.01)
            self.assertLess(abs(per_site - p), 3 * stderr + 1e-12)
            self.assertAlmostEqual(dos.values[0], dos.tau_identity)

    def test_monotone_and_nonnegative(self):
        spec = percolation(0.6, 2, seed=5)
        dos = abstract_dos(spec, spec.default_lambda_grid(64), 3, LatticeBox.centered((1, 1)), 30, check_padding=False)
        self.assertTrue(np.all(dos.values >= 0))
        self.assertTrue(np.all(np.diff(dos.values) >= 0))

    @override_settings(IDS_DENSE_THRESHOLD=100)
    def test_padding_check_skipped_over_threshold(self):
        with self.assertLogs('dos.abstract', level='WARNING'):
            dos = abstract_dos(percolation(0.5, 2), [0.0], 3, LatticeBox.centered((2, 2)), 2)
        self.assertIn(PADDING_CHECK_SKIPPED, dos.flags)

    def test_padding_check_runs(self):
        dos = abstract_dos(percolation(0.5, 1), [-1.0, 0.0, 1.0], 10, LatticeBox((1,)), 25)
        self.assertIsNotNone(dos.padding_shift)


class TraceFormulaTests(SimpleTestCase):
    @override_settings(IDS_TOLERANCES={'jump_mass_floor': 0.1})
    def test_free_chain(self):
        spec = percolation(1.0, 1)
        grid = np.linspace(-1.9, 1.9, 39)
        ids = empirical_ids(spec, folner_boxes(1, 2, [100, 200]), 1, lambda_grid=grid)
        dos = abstract_dos(spec, grid, 50, LatticeBox((2,), (-1,)), 1, check_padding=False)
        report = trace_formula_check(ids, dos)
        self.assertTrue(report.admitted.all())
        self.assertLessEqual(report.max_gap, 2 * (1 / 200 + 1 / 50))

    def test_empty_model(self):
        spec = percolation(0.0, 2)
        grid = spec.default_lambda_grid(32)
        ids = empirical_ids(spec, folner_boxes(2, 1, [8]), 2, lambda_grid=grid)
        dos = abstract_dos(spec, grid, 2, LatticeBox.centered((1, 1)), 2, check_padding=False)
        self.assertEqual(trace_formula_check(ids, dos).max_gap, 0.0)
        self.assertEqual(laplace_route_check(ids, dos, [0.5, 1, 2]).max_gap, 0.0)

    def test_outside_spectrum(self):
        spec = percolation(0.7, 2, seed=7)
        ids = empirical_ids(spec, folner_boxes(2, 1, [12]), 10, lambda_grid=[-4.5, 4.5])
        dos = abstract_dos(spec, [-4.5, 4.5], 3, LatticeBox.centered((1, 1)), 40, check_padding=False)
        report = trace_formula_check(ids, dos)
        self.assertEqual(report.gaps[0], 0.0)
        self.assertLessEqual(report.gaps[1], 3 * report.stderr[1] + 1e-12)

    def test_model_mismatch(self):
        grid = [0.0]
        ids = empirical_ids(percolation(0.5, 1), folner_boxes(1, 1, [10]), 1, lambda_grid=grid)
        dos = abstract_dos(percolation(0.6, 1), grid, 2, LatticeBox((1,)), 1, check_padding=False)
        with self.assertRaises(ConfigError):
            trace_formula_check(ids, dos)

    def test_laplace_route_free_chain(self):
        spec = percolation(1.0, 1)
        ids = empirical_ids(spec, folner_boxes(1, 2, [250, 500]), 1, lambda_grid=[0.0])
        dos = abstract_dos(spec, [0.0], 50, LatticeBox((2,), (-1,)), 1, check_padding=False)
        report = laplace_route_check(ids, dos, [1.0])
        self.assertLessEqual(report.max_gap, 1e-2)
        self.assertEqual(report.shift, 2.0)
        self.assertEqual(report.max_gap, report.gaps[0])
        self.assertAlmostEqual(report.shifted_gaps[0], report.gaps[0] * math.exp(-2.0), places=15)
        with self.assertRaises(DomainError):
            laplace_route_check(ids, dos, [0.0])

    def test_laplace_route_on_percolation_ensemble(self):
        spec = percolation(0.7, 2, seed=4)
        grid = spec.default_lambda_grid(64)
        ids = empirical_ids(spec, folner_boxes(2, 1, [12]), 20, lambda_grid=grid)
        dos = abstract_dos(spec, grid, 4, LatticeBox.centered((1, 1)), 20, check_padding=False)
        report = laplace_route_check(ids, dos, [0.5, 1.0, 2.0])
        self.assertEqual(len(report.gaps), 3)
        self.assertTrue(all(math.isfinite(g) and g >= 0 for g in report.gaps))
        self.assertTrue(all(v > 0 for v in report.ids_transforms + report.dos_transforms))
        for gap, shifted, t in zip(report.gaps, report.shifted_gaps, report.t_grid):
            self.assertLessEqual(shifted, gap)
            self.assertAlmostEqual(shifted, gap * math.exp(-4.0 * t))

    @override_settings(IDS_TOLERANCES={'jump_mass_floor': 0.1})
    def test_gaps_shrink_when_scale_and_padding_double(self):
        spec = percolation(1.0, 1)
        grid = np.linspace(-1.9, 1.9, 39)
        domain = LatticeBox((2,), (-1,))
        trace, laplace = [], []
        for side, padding in ((100, 25), (200, 50)):
            ids = empirical_ids(spec, folner_boxes(1, 1, [side]), 1, lambda_grid=grid)
            dos = abstract_dos(spec, grid, padding, domain, 1, check_padding=False)
            trace.append(trace_formula_check(ids, dos).max_gap)
            laplace.append(laplace_route_check(ids, dos, [0.5, 1.0, 2.0]).max_gap)
        self.assertLessEqual(trace[1], 1.2 * trace[0])
        self.assertLessEqual(laplace[1], 1.2 * laplace[0])
        self.assertLess(laplace[1], laplace[0])


def discretized_uniform(n, width=1.0):
    return counting_function(width * (np.arange(n) + 0.5) / n, n)


class UniquenessTests(SimpleTestCase):
    def test_close_transforms_bind_and_pass(self):
        grid = np.linspace(-0.5, 1.5, 401)
        report = uniqueness_check([discretized_uniform(1000), discretized_uniform(1001)], grid)
        self.assertEqual(len(report.t_grid), 21)
        self.assertAlmostEqual(report.t_grid[0], 0.1)
        self.assertAlmostEqual(report.t_grid[-1], 5.0)
        pair = report.pairs[0]
        self.assertTrue(pair['binding'])
        self.assertLessEqual(pair['laplace_gap'], 1e-4)
        self.assertLessEqual(pair['cdf_distance'], 0.01)
        self.assertTrue(report.passed)

    def test_distant_transforms_do_not_bind(self):
        grid = np.linspace(-0.5, 2.5, 401)
        report = uniqueness_check([discretized_uniform(1000), discretized_uniform(1000, width=2.0)], grid)
        pair = report.pairs[0]
        self.assertFalse(pair['binding'])
        self.assertGreater(pair['cdf_distance'], 0.01)
        self.assertTrue(report.passed)

    def test_binding_pair_beyond_tolerance_fails(self):
        grid = np.linspace(-0.5, 1.5, 401)
        report = uniqueness_check([discretized_uniform(1000), discretized_uniform(1001)], grid, tol=1e-6)
        self.assertTrue(report.pairs[0]['binding'])
        self.assertFalse(report.passed)

    def test_free_chain_scales(self):
        curves = [free_path_function(n) for n in (100, 200, 400)]
        report = uniqueness_check(curves, np.linspace(-2.5, 2.5, 64))
        self.assertEqual([p['scales'] for p in report.pairs], [[0, 1], [1, 2]])
        self.assertTrue(report.passed)
        gaps = [p['laplace_gap'] for p in report.pairs]
        self.assertLess(gaps[1], gaps[0])

    def test_t_grid_must_be_positive(self):
        with self.assertRaises(DomainError):
            uniqueness_check([discretized_uniform(10)] * 2, np.linspace(0, 1, 5), t_grid=[0.0, 1.0])


class BoundaryIndependenceTests(SimpleTestCase):
    def test_free_chain_decays_with_side(self):
        report = boundary_independence(percolation(1.0, 1), folner_boxes(1, 3, [16, 32, 64]), 1.0, 1)
        self.assertTrue(all(f >= 1.8 for f in report.decay_factors))
        self.assertTrue(report.passed)

    def test_no_hopping_no_boundary(self):
        spec = OperatorEnsembleSpec(model='anderson', dimension=2, potential_low=-1, potential_high=1, hopping=0.0)
        report = boundary_independence(spec, folner_boxes(2, 2, [4, 8]), 1.0, 3)
        self.assertLess(max(report.deviations), 1e-12)

    def test_time_must_be_positive(self):
        with self.assertRaises(DomainError):
            boundary_independence(percolation(1.0, 1), folner_boxes(1, 1, [8]), 0.0, 1)


class ClusterOracleTests(SimpleTestCase):
    def test_enumeration_counts(self):
        animals = fixed_animals(8)
        self.assertEqual([len(animals[s]) for s in range(1, 9)], [1, 2, 6, 19, 63, 216, 760, 2725])
        free = {canonical(shape) for shapes in animals.values() for shape in shapes}
        self.assertEqual(len(free), 1 + 1 + 2 + 5 + 12 + 35 + 108 + 369)

    def test_monomer(self):
        p = 0.3
        table = cluster_atom_oracle(1, p)
        np.testing.assert_array_equal(table.locations, [0.0])
        self.assertAlmostEqual(table.weights[0], p * (1 - p) ** 4)
        self.assertEqual(site_perimeter(((0, 0),)), 4)

    def test_dimer(self):
        p = 0.4
        table = cluster_atom_oracle(2, p)
        dimer = 2 * p ** 2 * (1 - p) ** 6
        self.assertAlmostEqual(table.weight_at(1.0), dimer)
        self.assertAlmostEqual(table.weight_at(-1.0), dimer)
        self.assertAlmostEqual(table.weight_at(0.0), p * (1 - p) ** 4)

    def test_degenerate_probabilities(self):
        for p in (0.0, 1.0):
            self.assertFalse(cluster_atom_oracle(3, p).weights.any())

    def test_site_budget(self):
        for p in (0.2, 0.5, 0.8):
            self.assertLessEqual(cluster_atom_oracle(6, p).site_budget, 1.0)

    def test_limits(self):
        with self.assertRaises(OperatorSizeError):
            cluster_atom_oracle(9, 0.5)
        with self.assertRaises(DomainError):
            cluster_atom_oracle(2, 0.5, d=3)

    def test_empirical_jumps_dominate_predictions(self):
        p = 0.3
        ids = empirical_ids(percolation(p, 2, seed=12), folner_boxes(2, 1, [32]), 20)
        oracle = cluster_atom_oracle(8, p)
        comparison = ids_jump_compare(ids, oracle)
        self.assertTrue(comparison.passed)
        locations = [row['location'] for row in comparison.rows]
        self.assertTrue({-1.0, 0.0, 1.0} <= set(locations))
        zero = next(row for row in comparison.rows if row['location'] == 0.0)
        self.assertGreaterEqual(zero['empirical'], 0.3 * 0.7 ** 4 - 3 * zero['stderr'])
        self.assertAlmostEqual(zero['upper'], oracle.weight_at(0.0) + 0.01)
        self.assertLessEqual(zero['empirical'], zero['upper'] + 3 * zero['stderr'])
        self.assertTrue(all(row['upper'] is None for row in comparison.rows if row['location'] != 0.0))

    def test_zero_jump_above_isolated_sites_fails(self):
        # Trimers and larger clusters add zero modes the single-site oracle misses
        p = 0.3
        ids = empirical_ids(percolation(p, 2, seed=12), folner_boxes(2, 1, [32]), 20)
        comparison = ids_jump_compare(ids, cluster_atom_oracle(1, p), slack=0.0)
        self.assertFalse(comparison.passed)
        zero = comparison.rows[0]
        self.assertFalse(zero['passed'])
        self.assertGreater(zero['empirical'], zero['upper'])

    def test_mismatched_model(self):
        ids = empirical_ids(percolation(0.3, 2), folner_boxes(2, 1, [6]), 2)
        with self.assertRaises(ConfigError):
            ids_jump_compare(ids, cluster_atom_oracle(2, 0.5))
        with self.assertRaises(ConfigError):
            ids_jump_compare(ids, cluster_atom_oracle(2, 0.3, variant='laplacian'))
