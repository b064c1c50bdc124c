import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DegeneracyError, DomainError
from delone.point_sets import (
    GOLDEN_RATIO,
    DeloneSet,
    Window,
    fibonacci_chain,
    perturbed_lattice,
    point_density,
    validate_delone,
)
from delone.predicates import delaunay_edges_bruteforce, incircle, incircle_perturbed, orient2d
from delone.voronoi import _exactly_cocircular, voronoi_adjacency
from lattice.boxes import LatticeBox


def fibonacci_density(length=100_000, phase=0.0):
    chain = fibonacci_chain(length, phase)
    xs = chain.points[:, 0]
    return (len(xs) - 1) / (xs[-1] - xs[0])


class PredicateTests(SimpleTestCase):
    def test_orientation(self):
        self.assertEqual(orient2d((0, 0), (1, 0), (0, 1)), 1)
        self.assertEqual(orient2d((0, 0), (0, 1), (1, 0)), -1)
        self.assertEqual(orient2d((0, 0), (1, 1), (3, 3)), 0)

    def test_incircle_exact_on_cocircular_points(self):
        self.assertEqual(incircle((0, 0), (1, 0), (1, 1), (0, 1)), 0)
        self.assertEqual(incircle((0, 0), (1, 0), (1, 1), (0.5, 0.5)), 1)
        self.assertEqual(incircle((0, 0), (1, 0), (1, 1), (2, 2)), -1)
        # 0.1 is not representable; the float determinant sits within its error bound
        self.assertEqual(incircle((0.1, 0.1), (1.1, 0.1), (1.1, 1.1), (0.1, 1.1)), 0)

    def test_numpy_coordinates(self):
        square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        self.assertEqual(orient2d(square[0], square[1], square[3]), 1)
        self.assertEqual(orient2d(square[0], square[2], square[1]), -1)
        self.assertEqual(incircle(square[0], square[1], square[2], square[3]), 0)
        self.assertEqual(incircle(square[0], square[1], square[2], np.array([0.5, 0.5])), 1)
        self.assertTrue(_exactly_cocircular(square, (0, 1, 2, 3)))
        self.assertEqual(len(delaunay_edges_bruteforce(square)), 5)

    def test_tie_break_yields_one_diagonal(self):
        square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        edges = delaunay_edges_bruteforce(square)
        diagonals = {(0, 2), (1, 3)} & edges
        self.assertEqual(len(diagonals), 1)
        self.assertEqual(len(edges), 5)
        self.assertNotEqual(incircle_perturbed(square, 0, 1, 2, 3), 0)


class DeloneGenerationTests(SimpleTestCase):
    def test_fibonacci_gap_alphabet(self):
        for length in (2, 3, 10, 1000):
            for phase in (0.0, 0.3, 0.77):
                xs = fibonacci_chain(length, phase).points[:, 0]
                gaps = np.diff(xs)
                close_to_short = np.abs(gaps - 1.0) < 1e-12
                close_to_long = np.abs(gaps - GOLDEN_RATIO) < 1e-12
                self.assertTrue(np.all(close_to_short | close_to_long))

    def test_fibonacci_constants(self):
        chain = fibonacci_chain(500, 0.0)
        self.assertAlmostEqual(chain.r_packing, 1.0, places=12)
        self.assertAlmostEqual(chain.R_covering, GOLDEN_RATIO / 2, places=12)

    def test_two_point_chain(self):
        chain = fibonacci_chain(2, 0.0)
        gap = chain.points[1, 0] - chain.points[0, 0]
        self.assertAlmostEqual(chain.R_covering, gap / 2)

    def test_fibonacci_density_is_phase_independent(self):
        densities = [fibonacci_density(phase=phase) for phase in (0.0, 0.25, 0.5, 0.9)]
        self.assertLess(max(densities) - min(densities), 1e-3)
        expected = 1.0 / (1.0 + (GOLDEN_RATIO - 1.0) / GOLDEN_RATIO)
        self.assertAlmostEqual(densities[0], expected, delta=1e-3)

    def test_exact_lattice(self):
        lattice = perturbed_lattice(LatticeBox((10, 10)), 0.0, 1)
        self.assertAlmostEqual(lattice.r_packing, 1.0)
        self.assertAlmostEqual(lattice.R_covering, math.sqrt(2) / 2)
        self.assertGreaterEqual(lattice.covering_bound, lattice.R_covering)

    def test_perturbed_lattice_packing(self):
        lattice = perturbed_lattice(LatticeBox((20, 20)), 0.2, 17)
        self.assertGreaterEqual(lattice.r_packing, 0.6)
        again = perturbed_lattice(LatticeBox((20, 20)), 0.2, 17)
        np.testing.assert_array_equal(lattice.points, again.points)

    def test_amplitude_domain(self):
        with self.assertRaises(DomainError):
            perturbed_lattice(LatticeBox((4, 4)), 0.5, 0)


class ValidationTests(SimpleTestCase):
    def test_unit_square(self):
        corners = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
        delone = validate_delone(corners, Window((0, 0), (1, 1)))
        self.assertAlmostEqual(delone.r_packing, 1.0)
        self.assertAlmostEqual(delone.R_covering, math.sqrt(2) / 2)

    def test_duplicate_points(self):
        with self.assertRaises(DegeneracyError):
            validate_delone(np.array([[0.5, 0.5], [0.5, 0.5]]), Window((0, 0), (1, 1)))

    def test_too_few_points(self):
        with self.assertRaises(DomainError):
            validate_delone(np.array([[0.5, 0.5]]), Window((0, 0), (1, 1)))

    def test_csv_and_json_round_trip(self):
        delone = perturbed_lattice(LatticeBox((5, 5)), 0.1, 3)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'points.csv')
            delone.write_csv(path)
            again = DeloneSet.read_csv(path, delone.window)
        np.testing.assert_array_equal(again.points, delone.points)
        restored = DeloneSet.from_json(delone.to_json())
        self.assertEqual(restored.r_packing, delone.r_packing)


class DensityTests(SimpleTestCase):
    def test_lattice_density(self):
        lattice = perturbed_lattice(LatticeBox((10, 10)), 0.0, 0)
        self.assertAlmostEqual(point_density(lattice), 1.0)

    def test_half_density_sublattice(self):
        coords = LatticeBox((10, 10)).coordinates
        kept = coords[coords[:, 0] % 2 == 0].astype(float)
        window = Window((-0.5, -0.5), (9.5, 9.5))
        self.assertAlmostEqual(point_density(validate_delone(kept, window)), 0.5)

    def test_zero_volume_window(self):
        lattice = perturbed_lattice(LatticeBox((3, 3)), 0.0, 0)
        with self.assertRaises(DomainError):
            point_density(lattice, Window((0, 0), (0, 2)))

    def test_disjoint_windows_agree(self):
        chain = fibonacci_chain(20_000, 0.0)
        length = 5000.0
        left = point_density(chain, Window((0.0,), (length,)))
        right = point_density(chain, Window((length + 1000.0,), (2 * length + 1000.0,)))
        self.assertLess(abs(left - right), 2 / length)
        self.assertAlmostEqual(left, fibonacci_density(), delta=1e-3)


class AdjacencyTests(SimpleTestCase):
    def test_one_dimensional_adjacency_is_consecutive(self):
        adjacency = voronoi_adjacency(fibonacci_chain(6, 0.1))
        self.assertEqual(adjacency.pairs, frozenset({(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)}))
        self.assertEqual(list(adjacency.boundary), [True, False, False, False, False, True])

    def test_triangle(self):
        points = np.array([[0.0, 0.0], [2.0, 0.1], [0.7, 1.9]])
        delone = validate_delone(points, Window((0, 0), (2, 2)))
        self.assertEqual(voronoi_adjacency(delone).pairs, frozenset({(0, 1), (0, 2), (1, 2)}))

    def test_square_lattice_has_four_face_neighbours(self):
        box = LatticeBox((7, 7))
        adjacency = voronoi_adjacency(perturbed_lattice(box, 0.0, 0))
        centre = box.index_of((3, 3))
        expected = sorted(box.index_of(c) for c in [(2, 3), (4, 3), (3, 2), (3, 4)])
        self.assertEqual(adjacency.neighbours(centre), expected)
        self.assertFalse(adjacency.boundary[centre])
        self.assertTrue(adjacency.boundary[box.index_of((0, 0))])

    def test_mean_interior_degree(self):
        adjacency = voronoi_adjacency(perturbed_lattice(LatticeBox((30, 30)), 0.2, 5))
        self.assertAlmostEqual(adjacency.mean_interior_degree(), 6.0, delta=0.1)

    def test_symmetric_without_loops(self):
        adjacency = voronoi_adjacency(perturbed_lattice(LatticeBox((8, 8)), 0.3, 2))
        for i, j in adjacency.pairs:
            self.assertLess(i, j)
            self.assertTrue(adjacency.adjacent(j, i))

    def test_duality_with_bruteforce_delaunay(self):
        delone = perturbed_lattice(LatticeBox((6, 6)), 0.3, 9)
        adjacency = voronoi_adjacency(delone)
        edges = delaunay_edges_bruteforce([tuple(p) for p in delone.points])
        for i in adjacency.interior:
            via_faces = set(adjacency.neighbours(int(i)))
            via_delaunay = {b if a == i else a for a, b in edges if i in (a, b)}
            self.assertEqual(via_faces, via_delaunay)

    def test_invariance_under_rigid_motion(self):
        delone = perturbed_lattice(LatticeBox((9, 9)), 0.25, 12)
        theta = 0.7
        rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        moved = delone.points @ rotation.T + np.array([3.5, -11.25])
        lo, hi = moved.min(axis=0) - 1, moved.max(axis=0) + 1
        other = validate_delone(moved, Window(tuple(lo), tuple(hi)))
        self.assertEqual(voronoi_adjacency(other).pairs, voronoi_adjacency(delone).pairs)
