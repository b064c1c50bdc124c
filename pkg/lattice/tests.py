import numpy as np
from django.test import SimpleTestCase
from scipy import ndimage

from core.exceptions import DomainError, InvalidScheduleError, OutOfRangeError
from lattice.boxes import LatticeBox, folner_boxes
from lattice.percolation import (
    PercolationConfig,
    clusters,
    is_translation_invariant,
    sample_percolation,
    translate_config,
)
from lattice.rng import mix, site_uniforms


def config_from_bits(bits, offset=0):
    box = LatticeBox((len(bits),), (offset,))
    return PercolationConfig(box=box, p=0.5, seed=0, occupied=np.array([b == '1' for b in bits]))


class LatticeBoxTests(SimpleTestCase):
    def test_index_round_trip(self):
        box = LatticeBox((3, 4, 2), (-1, 5, 0))
        self.assertEqual(box.site_count, 24)
        for index in range(box.site_count):
            self.assertEqual(box.index_of(box.coordinate_of(index)), index)
        self.assertTrue(box.contains((1, 8, 1)))
        self.assertFalse(box.contains((2, 8, 1)))
        self.assertFalse(box.contains((0, 4, 0)))

    def test_coordinates_are_row_major(self):
        box = LatticeBox((2, 3))
        self.assertEqual(box.coordinate_of(1), (0, 1))
        np.testing.assert_array_equal(box.coordinates[4], [1, 1])

    def test_neighbour_pairs_open_and_torus(self):
        box = LatticeBox((3, 3))
        self.assertEqual(len(box.neighbour_pairs()), 12)
        self.assertEqual(len(box.neighbour_pairs(periodic=True)), 18)
        line = LatticeBox((2,))
        self.assertEqual(len(line.neighbour_pairs(periodic=True)), 1)


class FolnerTests(SimpleTestCase):
    def test_one_dimensional_centering(self):
        seq = folner_boxes(1, 3, [2, 4, 8])
        self.assertEqual([b.offset for b in seq.boxes], [(-1,), (-2,), (-4,)])
        self.assertEqual([b.site_count for b in seq.boxes], [2, 4, 8])

    def test_two_dimensional_boundary_ratios(self):
        seq = folner_boxes(2, 2, [2, 4])
        self.assertEqual([b.site_count for b in seq.boxes], [4, 16])
        self.assertEqual([b.boundary_ratio() for b in seq.boxes], [1.0, 0.75])
        self.assertTrue(seq.boxes[1].contains_box(seq.boxes[0]))

    def test_non_increasing_schedule(self):
        with self.assertRaises(InvalidScheduleError):
            folner_boxes(1, 2, [4, 4])

    def test_smallest_boxes_tie_at_full_boundary(self):
        seq = folner_boxes(1, 3, [1, 2, 4])
        self.assertEqual([b.boundary_ratio() for b in seq.boxes], [1.0, 1.0, 0.5])
        seq = folner_boxes(2, 2, [1, 2])
        self.assertEqual([b.site_count for b in seq.boxes], [1, 4])
        with self.assertRaises(InvalidScheduleError):
            folner_boxes(2, 3, [2, 4, 4])

    def test_callable_schedule_and_rectangles(self):
        seq = folner_boxes(2, 3, lambda n: 4 * 2 ** n, aspect=(2, 1))
        self.assertEqual([b.sides for b in seq.boxes], [(8, 4), (16, 8), (32, 16)])

    def test_fundamental_domain_scales_regions(self):
        seq = folner_boxes(2, 2, [2, 4], cell=(2, 1))
        self.assertEqual(seq.cell_size, 2)
        self.assertEqual(seq.region(1).sides, (8, 4))
        self.assertEqual(seq.volume(1), 32)


class SamplingTests(SimpleTestCase):
    def test_degenerate_probabilities(self):
        box = LatticeBox((10, 10))
        self.assertTrue(sample_percolation(box, 1.0, 7).occupied.all())
        self.assertFalse(sample_percolation(box, 0.0, 7).occupied.any())

    def test_domain_error(self):
        with self.assertRaises(DomainError):
            sample_percolation(LatticeBox((4,)), 1.5, 0)
        with self.assertRaises(DomainError):
            sample_percolation(LatticeBox((4,)), -0.1, 0)

    def test_determinism(self):
        box = LatticeBox((20, 20))
        a = sample_percolation(box, 0.4, 123)
        b = sample_percolation(box, 0.4, 123)
        c = sample_percolation(box, 0.4, 124)
        self.assertEqual(a, b)
        self.assertNotEqual(a, c)

    def test_sub_box_sample_is_restriction(self):
        big = LatticeBox.centered((16, 16))
        small = LatticeBox.centered((6, 6))
        full = sample_percolation(big, 0.5, 99)
        part = sample_percolation(small, 0.5, 99)
        mask = small.mask(big.coordinates)
        np.testing.assert_array_equal(full.occupied[mask], part.occupied)

    def test_mean_occupancy(self):
        box = LatticeBox((100, 100))
        means = [sample_percolation(box, 0.5, mix(2024, k)).occupied.mean() for k in range(200)]
        stderr = 0.5 / np.sqrt(box.site_count * len(means))
        self.assertLess(abs(np.mean(means) - 0.5), 4 * stderr)

    def test_uniforms_in_unit_interval(self):
        u = site_uniforms(5, LatticeBox((50, 50)).coordinates, 1)
        self.assertTrue(((u >= 0) & (u < 1)).all())
        self.assertLess(abs(u.mean() - 0.5), 0.02)

    def test_record_round_trip(self):
        config = sample_percolation(LatticeBox((7, 5), (-3, 2)), 0.3, 11)
        record = config.to_record()
        self.assertEqual(set(record), {'d', 'sides', 'offset', 'p', 'seed', 'occupied'})
        self.assertEqual(PercolationConfig.from_record(record), config)


class TranslationTests(SimpleTestCase):
    def test_identity_and_period(self):
        config = sample_percolation(LatticeBox((6, 4)), 0.5, 3)
        self.assertEqual(translate_config(config, (0, 0)), config)
        self.assertEqual(translate_config(config, (6, 4)), config)
        self.assertEqual(translate_config(config, (6, 0)), config)

    def test_one_dimensional_torus_shift(self):
        shifted = translate_config(config_from_bits('1011'), (1,))
        self.assertEqual(''.join('1' if b else '0' for b in shifted.occupied), '1101')

    def test_window_mode(self):
        config = sample_percolation(LatticeBox((10, 10)), 0.5, 8)
        window = LatticeBox((4, 4), (2, 2))
        moved = translate_config(config, (3, -1), mode='window', window=window)
        self.assertEqual(moved.box, LatticeBox((4, 4), (5, 1)))
        for coordinate in window.coordinates:
            target = tuple(coordinate + np.array([3, -1]))
            self.assertEqual(
                moved.occupied[moved.box.index_of(target)],
                config.occupied[config.box.index_of(coordinate)],
            )
        with self.assertRaises(OutOfRangeError):
            translate_config(config, (5, 0), mode='window', window=window)

    def test_translation_preserves_occupancy_statistics(self):
        box = LatticeBox((30, 30))
        before, after = [], []
        for k in range(100):
            config = sample_percolation(box, 0.3, mix(77, k))
            before.append(config.occupied.mean())
            after.append(translate_config(config, (5, 11)).occupied.mean())
        self.assertAlmostEqual(np.mean(before), np.mean(after), places=12)
        self.assertLess(abs(np.mean(after) - 0.3), 0.01)

    def test_freeness_proxy(self):
        p, n = 0.5, 8
        box = LatticeBox((n,))
        seeds = 4000
        invariant = sum(is_translation_invariant(sample_percolation(box, p, mix(5, k)), (1,)) for k in range(seeds))
        bound = (p ** 2 + (1 - p) ** 2) ** (n / 2)
        self.assertLessEqual(invariant / seeds, bound + 3 * np.sqrt(bound / seeds))


class ClusterTests(SimpleTestCase):
    def test_full_torus_is_one_cluster(self):
        config = sample_percolation(LatticeBox((3, 3)), 1.0, 0)
        parts = clusters(config, periodic=True)
        self.assertEqual(len(parts), 1)
        self.assertEqual(len(parts[0]), 9)

    def test_alternating_line(self):
        self.assertEqual(clusters(config_from_bits('10101')), [[0], [2], [4]])

    def test_partition_and_flood_fill_recount(self):
        config = sample_percolation(LatticeBox((50, 50)), 0.3, 4242)
        parts = clusters(config)
        flat = sorted(site for part in parts for site in part)
        self.assertEqual(flat, list(config.occupied_indices))
        self.assertEqual(len(flat), len(set(flat)))
        _, recount = ndimage.label(config.grid())
        self.assertEqual(len(parts), recount)
