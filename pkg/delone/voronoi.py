# delone/voronoi.py
"""Voronoi face-sharing adjacency of a Delone set (the nearest-neighbour relation)."""

from collections import defaultdict
from dataclasses import dataclass
import logging

import numpy as np
from django.conf import settings
from scipy.spatial import Voronoi

from core.exceptions import DegeneracyError
from delone.predicates import incircle, orient2d

logger = logging.getLogger(__name__)

# Faces between tol and AMBIGUOUS_FACE_FACTOR·tol that are not exactly
# cocircular cannot be told apart from round-off and are reported.
AMBIGUOUS_FACE_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class VoronoiAdjacency:
    """Symmetric face-sharing relation; `pairs` holds (i, j) with i < j."""

    size: int
    pairs: frozenset
    boundary: np.ndarray

    def __post_init__(self):
        boundary = np.asarray(self.boundary, dtype=bool).copy()
        boundary.setflags(write=False)
        object.__setattr__(self, 'boundary', boundary)
        object.__setattr__(self, 'pairs', frozenset((min(i, j), max(i, j)) for i, j in self.pairs if i != j))

    def adjacent(self, i, j):
        return (min(i, j), max(i, j)) in self.pairs

    def neighbours(self, i):
        return sorted({b if a == i else a for a, b in self.pairs if i in (a, b)})

    def degrees(self):
        deg = np.zeros(self.size, dtype=np.int64)
        for i, j in self.pairs:
            deg[i] += 1
            deg[j] += 1
        return deg

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary)

    def mean_interior_degree(self):
        interior = self.interior
        return float(self.degrees()[interior].mean()) if len(interior) else float('nan')


def voronoi_adjacency(delone, face_tolerance=None):
    """
    Points are adjacent when their Voronoi cells share a face of positive
    (d-1)-measure.

    In 1D this is consecutive points. In 2D the candidates are the Delaunay
    edges (the ridges of the Voronoi diagram); a candidate counts only if
    its shared face is longer than face_tolerance·r_packing, so zero-length
    faces at cocircular quadruples never produce adjacency. Cells that are
    unbounded or reach outside the window are flagged as boundary cells.
    """
    n = len(delone)
    if delone.dimension == 1:
        order = np.argsort(delone.points[:, 0], kind='stable')
        pairs = {(int(a), int(b)) for a, b in zip(order[:-1], order[1:])}
        boundary = np.zeros(n, dtype=bool)
        boundary[[order[0], order[-1]]] = True
        return VoronoiAdjacency(size=n, pairs=pairs, boundary=boundary)

    if delone.dimension != 2:
        raise DegeneracyError(f"Voronoi adjacency is implemented for d ≤ 2, got d={delone.dimension}")
    if face_tolerance is None:
        face_tolerance = settings.IDS_TOLERANCES.get('voronoi_face', 1e-9)

    points = delone.points
    if np.linalg.matrix_rank(points - points[0]) < 2:
        # Collinear cells are parallel strips: only consecutive points touch.
        direction = points[int(np.argmax(np.linalg.norm(points - points[0], axis=1)))] - points[0]
        order = np.argsort(points @ direction, kind='stable')
        pairs = {(int(a), int(b)) for a, b in zip(order[:-1], order[1:])}
        return VoronoiAdjacency(size=n, pairs=pairs, boundary=np.ones(n, dtype=bool))
    if n == 3:
        return VoronoiAdjacency(size=3, pairs={(0, 1), (1, 2), (0, 2)}, boundary=np.ones(3, dtype=bool))

    vor = Voronoi(points)
    tol = face_tolerance * delone.r_packing
    vertex_owners = defaultdict(set)
    for (i, j), ridge in zip(vor.ridge_points, vor.ridge_vertices):
        for v in ridge:
            if v >= 0:
                vertex_owners[v].update((int(i), int(j)))

    pairs = set()
    ambiguous = []
    for (i, j), ridge in zip(vor.ridge_points, vor.ridge_vertices):
        i, j = int(i), int(j)
        if -1 in ridge:
            pairs.add((i, j))
            continue
        length = float(np.linalg.norm(vor.vertices[ridge[0]] - vor.vertices[ridge[1]]))
        if length > AMBIGUOUS_FACE_FACTOR * tol:
            pairs.add((i, j))
        elif length > tol:
            # Short face: exactly cocircular means the true face is a point.
            quad = _face_quadruple(i, j, ridge, vertex_owners)
            if quad is None or not _exactly_cocircular(points, quad):
                ambiguous.append(quad or (i, j))

    if ambiguous:
        logger.error(f"{len(ambiguous)} Voronoi face(s) between tolerance and resolution")
        raise DegeneracyError("numerically degenerate Voronoi faces beyond tie-break tolerance", ambiguous)

    boundary = _boundary_cells(vor, delone.window, n)
    adjacency = VoronoiAdjacency(size=n, pairs=pairs, boundary=boundary)
    logger.info(
        f"Voronoi adjacency: {n} points, {len(adjacency.pairs)} faces, "
        f"{int(boundary.sum())} boundary cells"
    )
    return adjacency


def _face_quadruple(i, j, ridge, vertex_owners):
    owners = sorted(vertex_owners[ridge[0]] | vertex_owners[ridge[1]])
    others = [k for k in owners if k not in (i, j)]
    if len(others) < 2:
        return None
    return (i, j, others[0], others[1])


def _exactly_cocircular(points, quad):
    a, b, c, d = (points[k] for k in quad)
    if orient2d(a, b, c) == 0:
        return False
    return incircle(a, b, c, d) == 0


def _boundary_cells(vor, window, n):
    boundary = np.zeros(n, dtype=bool)
    inside = window.contains(vor.vertices, half_open=False) if len(vor.vertices) else np.zeros(0, dtype=bool)
    for point, region_index in enumerate(vor.point_region):
        region = vor.regions[region_index]
        if not region or -1 in region or not np.all(inside[region]):
            boundary[point] = True
    return boundary
