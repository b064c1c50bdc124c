import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase, override_settings

from core.exceptions import DomainError, OperatorSizeError
from delone.point_sets import fibonacci_chain, perturbed_degree_bound, perturbed_lattice
from delone.voronoi import voronoi_adjacency
from lattice.boxes import LatticeBox
from lattice.percolation import PercolationConfig, sample_percolation, translate_config
from lattice.rng import mix
from operators.ensembles import OperatorEnsembleSpec
from operators.functions import HeatKernel, Indicator, PiecewiseLinear, Polynomial, spectral_function
from operators.matrices import (
    EMPTY_RESTRICTION,
    SymmetricOperator,
    adjacency_operator,
    anderson_operator,
    delone_operator,
    dirichlet_laplacian_operator,
    heat_semigroup,
    heat_trace,
    laplacian_operator,
    localized_trace,
    restrict,
)
from spectra.eigen import eigenvalues


def path_eigenvalues(n):
    return np.sort(2 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1)))


def full_line(n, offset=0):
    box = LatticeBox((n,), (offset,))
    return PercolationConfig(box=box, p=1.0, seed=0, occupied=np.ones(n, dtype=bool))


def random_operator(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    return SymmetricOperator.from_dense((m + m.T) / 2)


class AdjacencyTests(SimpleTestCase):
    def test_three_site_path(self):
        values = eigenvalues(adjacency_operator(full_line(3)))
        np.testing.assert_allclose(values, [-math.sqrt(2), 0, math.sqrt(2)], atol=1e-12)

    def test_single_site(self):
        config = PercolationConfig(box=LatticeBox((3,)), p=0.5, seed=0, occupied=np.array([False, True, False]))
        op = adjacency_operator(config)
        self.assertEqual(op.dimension, 1)
        np.testing.assert_array_equal(op.to_dense(), [[0.0]])

    def test_empty_configuration(self):
        op = adjacency_operator(sample_percolation(LatticeBox((5, 5)), 0.0, 1))
        self.assertEqual(op.dimension, 0)
        self.assertEqual(len(eigenvalues(op)), 0)

    def test_exact_symmetry_and_hopping_range(self):
        op = anderson_operator(LatticeBox((6, 5)), -1.0, 1.0, 0.7, 3)
        dense = op.to_dense()
        self.assertTrue(np.array_equal(dense, dense.T))
        self.assertEqual(op.hopping_range, 1)
        coords = op.labels
        rows, cols = np.nonzero(dense)
        distances = np.abs(coords[rows] - coords[cols]).sum(axis=1)
        self.assertLessEqual(distances.max(), op.hopping_range)

    def test_norm_bound(self):
        for d, sides in ((1, (40,)), (2, (12, 12)), (3, (5, 5, 5))):
            op = adjacency_operator(sample_percolation(LatticeBox(sides), 0.6, 8))
            self.assertLessEqual(np.abs(eigenvalues(op)).max(), 2 * d + 1e-12)

    def test_laplacian_variants(self):
        config = full_line(4)
        np.testing.assert_array_equal(
            laplacian_operator(config).to_dense(),
            [[1, -1, 0, 0], [-1, 2, -1, 0], [0, -1, 2, -1], [0, 0, -1, 1]],
        )
        np.testing.assert_array_equal(np.diag(dirichlet_laplacian_operator(config).to_dense()), [2, 2, 2, 2])
        self.assertGreaterEqual(eigenvalues(laplacian_operator(config)).min(), -1e-12)


class AndersonTests(SimpleTestCase):
    def test_scalar_operator(self):
        op = anderson_operator(LatticeBox((4, 3)), 1.5, 1.5, 0.0, 9)
        np.testing.assert_array_equal(op.to_dense(), 1.5 * np.eye(12))

    def test_free_path(self):
        op = anderson_operator(LatticeBox((9,)), 0.0, 0.0, 1.0, 0)
        np.testing.assert_allclose(eigenvalues(op), path_eigenvalues(9), atol=1e-12)

    def test_deterministic_in_seed(self):
        box = LatticeBox((7, 7))
        a = anderson_operator(box, -2, 2, 1, 42).to_dense()
        b = anderson_operator(box, -2, 2, 1, 42).to_dense()
        c = anderson_operator(box, -2, 2, 1, 43).to_dense()
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        self.assertTrue(np.all((np.diag(a) >= -2) & (np.diag(a) <= 2)))

    def test_inverted_bounds(self):
        with self.assertRaises(DomainError):
            anderson_operator(LatticeBox((3,)), 1.0, 0.0, 1.0, 0)


class DeloneOperatorTests(SimpleTestCase):
    def test_chain_is_a_path(self):
        op = delone_operator(voronoi_adjacency(fibonacci_chain(6, 0.4)))
        np.testing.assert_allclose(eigenvalues(op), path_eigenvalues(6), atol=1e-12)

    def test_square_lattice_matches_full_occupancy(self):
        box = LatticeBox((6, 6))
        lattice_op = adjacency_operator(sample_percolation(box, 1.0, 0))
        delone = perturbed_lattice(box, 0.0, 0)
        np.testing.assert_array_equal(delone_operator(voronoi_adjacency(delone), delone).to_dense(), lattice_op.to_dense())

    def test_row_sums_are_degrees(self):
        delone = perturbed_lattice(LatticeBox((10, 10)), 0.2, 4)
        adjacency = voronoi_adjacency(delone)
        op = delone_operator(adjacency, delone)
        np.testing.assert_array_equal(op.to_dense().sum(axis=1), adjacency.degrees())

    def test_dropping_boundary_cells(self):
        delone = perturbed_lattice(LatticeBox((8, 8)), 0.2, 4)
        adjacency = voronoi_adjacency(delone)
        op = delone_operator(adjacency, delone, boundary='drop')
        self.assertEqual(op.dimension, len(adjacency.interior))


class RestrictionTests(SimpleTestCase):
    def test_full_region_is_identity(self):
        op = adjacency_operator(sample_percolation(LatticeBox((5, 5)), 0.7, 2))
        self.assertIs(restrict(op, LatticeBox((5, 5))), op)

    def test_middle_of_five_path(self):
        op = adjacency_operator(full_line(5))
        middle = restrict(op, LatticeBox((3,), (1,)))
        np.testing.assert_allclose(eigenvalues(middle), [-math.sqrt(2), 0, math.sqrt(2)], atol=1e-12)
        labels = restrict(op, [(1,), (2,), (3,)])
        np.testing.assert_array_equal(labels.to_dense(), middle.to_dense())

    def test_interlacing(self):
        for seed in range(5):
            op = anderson_operator(LatticeBox((8, 8)), -1, 1, 1, seed)
            sub = restrict(op, LatticeBox((5, 4), (1, 2)))
            parent, child = eigenvalues(op), eigenvalues(sub)
            self.assertLessEqual(child.max(), parent.max() + 1e-12)
            self.assertGreaterEqual(child.min(), parent.min() - 1e-12)

    def test_empty_restriction_is_flagged(self):
        op = adjacency_operator(full_line(4))
        with self.assertLogs('operators.matrices', level='WARNING'):
            empty = restrict(op, LatticeBox((2,), (10,)))
        self.assertEqual(empty.dimension, 0)
        self.assertIn(EMPTY_RESTRICTION, empty.flags)

    def test_translation_equivariance(self):
        box = LatticeBox((10, 10))
        region = LatticeBox((4, 5), (1, 2))
        shift = (3, 2)
        for seed in range(4):
            config = sample_percolation(box, 0.6, mix(11, seed))
            moved = translate_config(config, shift)
            before = eigenvalues(restrict(adjacency_operator(config, periodic=True), region))
            after = eigenvalues(restrict(adjacency_operator(moved, periodic=True), region.shifted(shift)))
            np.testing.assert_allclose(before, after, atol=1e-10)


class SemigroupTests(SimpleTestCase):
    def test_time_zero_is_identity(self):
        op = random_operator(6, 0)
        np.testing.assert_array_equal(heat_semigroup(op, 0.0), np.eye(6))

    def test_scalar(self):
        op = SymmetricOperator.from_dense([[2.0]])
        np.testing.assert_allclose(heat_semigroup(op, 1.0), [[math.exp(-2.0)]])

    def test_semigroup_law(self):
        op = random_operator(50, 1)
        t, s = 0.3, 0.45
        product = heat_semigroup(op, t) @ heat_semigroup(op, s)
        self.assertLessEqual(np.abs(product - heat_semigroup(op, t + s)).max(), 1e-10)

    def test_positive_definite(self):
        semigroup = heat_semigroup(random_operator(20, 2), 0.5)
        self.assertTrue(np.array_equal(semigroup, semigroup.T))
        self.assertGreater(np.linalg.eigvalsh(semigroup).min(), 0.0)

    def test_negative_time(self):
        with self.assertRaises(DomainError):
            heat_semigroup(random_operator(3, 0), -1.0)

    @override_settings(IDS_DENSE_THRESHOLD=10)
    def test_size_guard(self):
        with self.assertRaises(OperatorSizeError) as ctx:
            heat_semigroup(adjacency_operator(full_line(11)), 1.0)
        self.assertEqual(ctx.exception.dimension, 11)

    def test_heat_trace_is_monotone_for_laplacians(self):
        op = laplacian_operator(sample_percolation(LatticeBox((12, 12)), 0.6, 5))
        traces = [heat_trace(op, t) for t in np.linspace(0.0, 5.0, 21)]
        self.assertEqual(traces[0], op.dimension)
        self.assertTrue(all(b <= a + 1e-12 for a, b in zip(traces, traces[1:])))


class LocalizedTraceTests(SimpleTestCase):
    def test_identity_over_all_sites(self):
        op = anderson_operator(LatticeBox((5, 5)), -1, 1, 1, 0)
        self.assertAlmostEqual(localized_trace(Polynomial((1.0,)), op, LatticeBox((5, 5))), 25.0, places=10)

    def test_single_site_expectation_is_p(self):
        p, seeds = 0.3, 400
        box = LatticeBox.centered((5, 5))
        origin = [(0, 0)]
        values = [
            localized_trace(Polynomial((1.0,)), adjacency_operator(sample_percolation(box, p, mix(3, k))), origin)
            for k in range(seeds)
        ]
        self.assertLess(abs(np.mean(values) - p), 4 * math.sqrt(p * (1 - p) / seeds))

    def test_heat_trace_consistency(self):
        op = random_operator(30, 3)
        everything = lambda labels: np.ones(len(labels), dtype=bool)
        self.assertAlmostEqual(
            localized_trace(HeatKernel(0.8), op, everything), float(np.trace(heat_semigroup(op, 0.8))), places=9
        )

    def test_missing_sites_contribute_nothing(self):
        op = adjacency_operator(full_line(4))
        self.assertEqual(localized_trace(Polynomial((1.0,)), op, [(17,)]), 0.0)


class SpectralFunctionTests(SimpleTestCase):
    def test_indicator_is_strict(self):
        np.testing.assert_array_equal(Indicator(0.0)([-1.0, 0.0, 1.0]), [1.0, 0.0, 0.0])

    def test_piecewise_linear_has_compact_support(self):
        hat = PiecewiseLinear((-1.0, 0.0, 1.0), (0.0, 1.0, 0.0))
        np.testing.assert_allclose(hat([-2.0, -0.5, 0.0, 3.0]), [0.0, 0.5, 1.0, 0.0])

    def test_records(self):
        for function in (Indicator(1.5), HeatKernel(2.0), Polynomial((1.0, 0.0, 2.0)), PiecewiseLinear((0, 1), (1, 0))):
            self.assertEqual(spectral_function(function.to_dict()), function)
        with self.assertRaises(DomainError):
            spectral_function({'kind': 'arbitrary'})


class EnsembleTests(SimpleTestCase):
    def test_parameter_domains(self):
        with self.assertRaises(DomainError):
            OperatorEnsembleSpec(model='percolation-adjacency', p=1.5)
        with self.assertRaises(DomainError):
            OperatorEnsembleSpec(model='anderson')
        with self.assertRaises(DomainError):
            OperatorEnsembleSpec(model='delone-voronoi', dimension=2, amplitude=0.5)
        with self.assertRaises(DomainError):
            OperatorEnsembleSpec(model='ising')

    def test_restriction_consistency_across_regions(self):
        spec = OperatorEnsembleSpec(model='percolation-laplacian', dimension=2, p=0.6, base_seed=5)
        big, small = LatticeBox.centered((10, 10)), LatticeBox.centered((4, 4))
        np.testing.assert_array_equal(
            restrict(spec.build(big, 2), small).to_dense(), spec.build(small, 2).to_dense()
        )

    def test_anderson_potential_from_spec(self):
        spec = OperatorEnsembleSpec(model='anderson', dimension=1, potential_low=-1, potential_high=1, hopping=0.0)
        op = spec.build(LatticeBox((20,)), 0)
        self.assertEqual(op.hopping_range, 0)
        self.assertTrue(np.all(np.abs(op.diagonal()) <= 1))

    def test_fibonacci_ensemble(self):
        spec = OperatorEnsembleSpec(model='delone-voronoi', dimension=1, delone_kind='fibonacci', base_seed=1)
        op = spec.build(LatticeBox.centered((12,)), 0)
        self.assertEqual(op.dimension, 12)
        np.testing.assert_allclose(eigenvalues(op), path_eigenvalues(12), atol=1e-12)

    def test_perturbed_lattice_ensemble(self):
        spec = OperatorEnsembleSpec(model='delone-voronoi', dimension=2, amplitude=0.2, base_seed=2)
        big, small = LatticeBox.centered((10, 10)), LatticeBox.centered((4, 4))
        op = spec.build(big, 1)
        self.assertEqual(op.dimension, 100)
        np.testing.assert_array_equal(restrict(op, small).to_dense(), spec.build(small, 1).to_dense())

    def test_delone_runs_drop_boundary_cells_by_default(self):
        spec = OperatorEnsembleSpec(model='delone-voronoi', dimension=2, amplitude=0.2, base_seed=2)
        self.assertEqual(spec.boundary, 'drop')
        region = LatticeBox.centered((6, 6))
        kept = OperatorEnsembleSpec(
            model='delone-voronoi', dimension=2, amplitude=0.2, base_seed=2, boundary='keep',
        ).build(region, 0)
        self.assertEqual(kept.dimension, 36)
        self.assertEqual(spec.build(region, 0).dimension, 36)

    def test_perturbed_lattice_interval_covers_actual_degrees(self):
        spec = OperatorEnsembleSpec(model='delone-voronoi', dimension=2, amplitude=0.3, base_seed=3)
        region = LatticeBox.centered((10, 10))
        bound = perturbed_degree_bound(spec.amplitude)
        low, high = spec.spectral_interval()
        self.assertEqual((low, high), (-float(bound), float(bound)))
        for k in range(3):
            adjacency = voronoi_adjacency(perturbed_lattice(region, spec.amplitude, spec.realization_seed(k)))
            degrees = adjacency.degrees()[adjacency.interior]
            self.assertLessEqual(int(degrees.max()), bound)
        sharp_low, sharp_high = spec.spectral_interval(region, 3)
        self.assertTrue(low <= sharp_low and sharp_high <= high)
        for k in range(3):
            eigs = eigenvalues(spec.build(region, k))
            self.assertTrue(sharp_low - 1e-12 <= eigs[0] and eigs[-1] <= sharp_high + 1e-12)

    def test_degree_bound_of_the_square_lattice(self):
        self.assertEqual(perturbed_degree_bound(0.0), 8)
        self.assertEqual(perturbed_degree_bound(0.2), 20)

    def test_default_grid(self):
        spec = OperatorEnsembleSpec(model='anderson', dimension=2, potential_low=-0.5, potential_high=0.5)
        grid = spec.default_lambda_grid()
        self.assertEqual(len(grid), 512)
        self.assertEqual((grid[0], grid[-1]), (-4.5, 4.5))


class ExportTests(SimpleTestCase):
    def test_coordinate_format(self):
        op = anderson_operator(LatticeBox((3, 3)), -1, 1, 1, 7)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'op.txt')
            op.write_coordinate_format(path)
            with open(path, encoding='utf-8') as handle:
                self.assertTrue(handle.readline().startswith('# {'))
            again = SymmetricOperator.read_coordinate_format(path)
        np.testing.assert_array_equal(again.to_dense(), op.to_dense())
        np.testing.assert_array_equal(again.labels, op.labels)
