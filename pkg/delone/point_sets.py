# delone/point_sets.py
"""Finite Delone point sets: generation, (r, R) validation, density and import/export."""

import csv
from dataclasses import dataclass
import json
import logging
import math

import numpy as np
from scipy.spatial import cKDTree

from core.exceptions import DegeneracyError, DomainError
from lattice.rng import STREAM_DISPLACEMENT_X, STREAM_DISPLACEMENT_Y, site_uniforms

logger = logging.getLogger(__name__)

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2

# Probe pitch for the covering radius, as a fraction of r_packing.
PROBE_FRACTION = 0.25


@dataclass(frozen=True, eq=False)
class Window:
    """Axis-parallel box [lower, upper] in R^d."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, 'lower', tuple(float(v) for v in self.lower))
        object.__setattr__(self, 'upper', tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise DomainError("window bounds have different dimensions")

    @property
    def dimension(self):
        return len(self.lower)

    @property
    def extents(self):
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def volume(self):
        return float(np.prod(np.clip(self.extents, 0.0, None)))

    def contains(self, points, half_open=True):
        pts = np.atleast_2d(points)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        upper_ok = pts < hi if half_open else pts <= hi
        return np.all((pts >= lo) & upper_ok, axis=1)

    def shrunk(self, margin):
        return Window(tuple(v + margin for v in self.lower), tuple(v - margin for v in self.upper))

    def as_dict(self):
        return {'lower': list(self.lower), 'upper': list(self.upper)}


@dataclass(frozen=True, eq=False)
class DeloneSet:
    """
    A finite point set with verified Delone constants.

    `r_packing` is the exact minimum pairwise distance. `R_covering` is the
    largest distance from a probe on a grid of pitch ≤ R/4 over the window
    to its nearest point; `covering_bound` adds the probe half-diagonal and
    is a certified upper bound for the true covering radius of the window.
    """

    points: np.ndarray
    window: Window
    r_packing: float
    R_covering: float
    covering_bound: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts.setflags(write=False)
        object.__setattr__(self, 'points', pts)

    @property
    def dimension(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def to_json(self):
        return json.dumps({
            'dimension': self.dimension,
            'window': self.window.as_dict(),
            'r_packing': self.r_packing,
            'R_covering': self.R_covering,
            'covering_bound': self.covering_bound,
            'points': self.points.tolist(),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return validate_delone(np.asarray(data['points'], dtype=np.float64), Window(**data['window']))

    def write_csv(self, path):
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path, window=None):
        with open(path, newline='', encoding='utf-8') as handle:
            rows = [[float(v) for v in row] for row in csv.reader(handle) if row]
        points = np.asarray(rows, dtype=np.float64)
        if window is None:
            window = Window(tuple(points.min(axis=0)), tuple(points.max(axis=0)))
        return validate_delone(points, window)


def packing_radius(points):
    """Exact minimum pairwise distance; raises DegeneracyError on coincident points."""
    tree = cKDTree(points)
    distances, neighbours = tree.query(points, k=2)
    nearest = distances[:, 1]
    if np.any(nearest == 0.0):
        offenders = sorted({tuple(sorted((int(i), int(neighbours[i, 1])))) for i in np.flatnonzero(nearest == 0.0)})
        raise DegeneracyError(f"{len(offenders)} pair(s) of coincident points", offenders)
    return float(nearest.min())


def covering_radius(points, window, pitch):
    """Probe-grid covering radius over `window` and the probe half-diagonal."""
    axes = []
    for lo, hi in zip(window.lower, window.upper):
        steps = max(int(math.ceil((hi - lo) / pitch - 1e-12)), 1)
        axes.append(np.linspace(lo, hi, steps + 1))
    actual_pitch = max((ax[1] - ax[0]) if len(ax) > 1 else 0.0 for ax in axes)
    probes = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, len(axes))
    distances, _ = cKDTree(points).query(probes, k=1)
    return float(distances.max()), actual_pitch * math.sqrt(len(axes)) / 2


def validate_delone(points, window):
    """
    Verify the Delone property of `points` on `window`.

    Returns a DeloneSet carrying the exact packing radius and the probe-grid
    covering radius. In one dimension the covering radius is exact: half
    the largest gap, or the distance from a window end to the nearest point.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise DomainError(f"a Delone set needs at least 2 points, got {pts.shape[0]}")
    if window.dimension != pts.shape[1]:
        raise DomainError(f"window dimension {window.dimension} does not match points {pts.shape[1]}")

    r = packing_radius(pts)
    if pts.shape[1] == 1:
        xs = np.sort(pts[:, 0])
        candidates = [np.diff(xs).max() / 2, xs[0] - window.lower[0], window.upper[0] - xs[-1]]
        R = float(max(candidates))
        bound = R
    else:
        R, slack = covering_radius(pts, window, PROBE_FRACTION * r)
        # A coarse first pass can overestimate R; the probe pitch must stay ≤ R/4.
        if PROBE_FRACTION * r > R / 4:
            R, slack = covering_radius(pts, window, R / 4)
        bound = R + slack
    logger.debug(f"Delone set of {len(pts)} points: r={r:.6g}, R={R:.6g} (bound {bound:.6g})")
    return DeloneSet(points=pts, window=window, r_packing=r, R_covering=R, covering_bound=bound)


def fibonacci_chain(length, phase=0.0, start=0):
    """
    Cut-and-project Fibonacci chain x_n = n + (φ - 1)·⌊n/φ + phase⌋,
    n = start..start+length-1.

    Consecutive gaps are 1 (short) or φ (long); long gaps occur with
    frequency 1/φ. Point x_n does not depend on `start`, so chains over
    nested index ranges are nested.
    """
    length = int(length)
    if length < 2:
        raise DomainError(f"a Fibonacci chain needs at least 2 points, got {length}")
    phase = float(phase)
    if not 0.0 <= phase < 1.0:
        raise DomainError(f"phase must lie in [0, 1), got {phase}")
    n = np.arange(int(start), int(start) + length, dtype=np.float64)
    jumps = np.floor(n / GOLDEN_RATIO + phase)
    xs = n + (GOLDEN_RATIO - 1.0) * jumps
    window = Window((xs[0],), (xs[-1],))
    return validate_delone(xs[:, None], window)


def perturbed_lattice(box, amplitude, seed):
    """
    Points of Z^2 ∩ box, each displaced uniformly in a square of half-width
    `amplitude`. For amplitude < 1/2 the result is Delone with
    r ≥ 1 - 2·amplitude. The displacement of a site depends on (seed, site)
    only.
    """
    amplitude = float(amplitude)
    if not 0.0 <= amplitude < 0.5:
        raise DomainError(f"amplitude must lie in [0, 1/2), got {amplitude}")
    if box.dimension != 2:
        raise DomainError(f"perturbed lattices are two-dimensional, got d={box.dimension}")
    coords = box.coordinates
    dx = site_uniforms(seed, coords, STREAM_DISPLACEMENT_X)
    dy = site_uniforms(seed, coords, STREAM_DISPLACEMENT_Y)
    points = coords.astype(np.float64) + amplitude * (2.0 * np.stack([dx, dy], axis=1) - 1.0)
    lower = tuple(o - 0.5 for o in box.offset)
    upper = tuple(o + s - 0.5 for o, s in zip(box.offset, box.sides))
    return validate_delone(points, Window(lower, upper))


def perturbed_degree_bound(amplitude):
    """
    Largest Voronoi degree possible in a perturbed lattice of the given
    amplitude. Every point of the plane lies within √2/2 + √2·amplitude of
    the set, so Voronoi neighbours are at most twice that apart and their
    sites at most √2(1 + 4·amplitude) apart; the bound counts the lattice
    vectors that short.
    """
    radius = math.sqrt(2.0) * (1.0 + 4.0 * float(amplitude))
    reach = int(math.floor(radius))
    axis = np.arange(-reach, reach + 1)
    x, y = np.meshgrid(axis, axis)
    return int(np.count_nonzero(x ** 2 + y ** 2 <= radius ** 2 + 1e-12)) - 1


def point_density(delone, window=None):
    """Points of `delone` in the half-open `window` per unit volume."""
    window = window or delone.window
    volume = window.volume
    if volume <= 0.0:
        raise DomainError(f"window {window.as_dict()} has zero volume")
    return int(window.contains(delone.points).sum()) / volume
