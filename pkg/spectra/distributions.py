# spectra/distributions.py
"""
Left-continuous step distribution functions and their Stieltjes algebra.

A DistributionFunction with breakpoints λ_1 < ... < λ_m and values
v_0 ≤ ... ≤ v_m evaluates to v_k on (λ_k, λ_{k+1}], so N(λ_k) is the value
just left of the jump at λ_k. Eigenvalue counting uses the strict
inequality λ_i < λ throughout.
"""

import csv
from dataclasses import dataclass, field
import logging

import numpy as np
from django.conf import settings

from core.exceptions import DegenerateGridError, DomainError

logger = logging.getLogger(__name__)


def tolerance(name, default):
    return getattr(settings, 'IDS_TOLERANCES', {}).get(name, default)


@dataclass(frozen=True, eq=False)
class DistributionFunction:
    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        breakpoints = np.array(self.breakpoints, dtype=np.float64).reshape(-1)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.shape != (breakpoints.size + 1,):
            raise DomainError(f"{breakpoints.size} breakpoints need {breakpoints.size + 1} values, got {values.size}")
        if np.any(np.diff(breakpoints) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if np.any(np.diff(values) < 0) or values[0] < 0:
            raise DomainError("distribution values must be nonnegative and nondecreasing")
        breakpoints.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, 'breakpoints', breakpoints)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zero(cls):
        return cls(breakpoints=np.zeros(0), values=np.zeros(1))

    @classmethod
    def from_jumps(cls, locations, weights, base=0.0):
        """Step function with jumps `weights` at `locations`; equal locations are merged."""
        locations = np.asarray(locations, dtype=np.float64).reshape(-1)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if locations.size == 0:
            return cls(breakpoints=np.zeros(0), values=np.array([base]))
        unique, inverse = np.unique(locations, return_inverse=True)
        merged = np.zeros(unique.size)
        np.add.at(merged, inverse, weights)
        keep = merged != 0.0
        return cls(breakpoints=unique[keep], values=base + np.concatenate([[0.0], np.cumsum(merged[keep])]))

    def __call__(self, lam):
        return self.values[np.searchsorted(self.breakpoints, lam, side='left')]

    def right_limit(self, lam):
        return self.values[np.searchsorted(self.breakpoints, lam, side='right')]

    @property
    def jump_locations(self):
        return self.breakpoints

    @property
    def jump_weights(self):
        return np.diff(self.values)

    @property
    def total_mass(self):
        return float(self.values[-1] - self.values[0])

    @property
    def top(self):
        return float(self.values[-1])

    def __eq__(self, other):
        if not isinstance(other, DistributionFunction):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(self.values, other.values)

    __hash__ = None

    def __add__(self, other):
        locations = np.concatenate([self.breakpoints, other.breakpoints])
        weights = np.concatenate([self.jump_weights, other.jump_weights])
        return DistributionFunction.from_jumps(locations, weights, base=self.values[0] + other.values[0])

    def scaled(self, factor):
        factor = float(factor)
        if factor < 0:
            raise DomainError(f"scale factor must be ≥ 0, got {factor}")
        if factor == 0:
            return DistributionFunction.zero()
        return DistributionFunction(self.breakpoints, self.values * factor)

    def shifted(self, delta):
        # Breakpoints closer than one ulp can coincide after the shift
        return DistributionFunction.from_jumps(
            self.breakpoints + float(delta), self.jump_weights, base=self.values[0],
        )

    def offset(self, constant):
        return DistributionFunction(self.breakpoints, self.values + float(constant))

    def csv_rows(self):
        """(lambda, N_left, N_right) at every breakpoint."""
        return [
            (float(lam), float(left), float(right))
            for lam, left, right in zip(self.breakpoints, self.values[:-1], self.values[1:])
        ]

    def write_csv(self, path, header_lines=()):
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            for line in header_lines:
                handle.write(f"# {line}\n")
            writer = csv.writer(handle)
            writer.writerow(['lambda', 'N_left', 'N_right'])
            for row in self.csv_rows():
                writer.writerow([repr(v) for v in row])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline='', encoding='utf-8') as handle:
            rows = [row for row in csv.reader(line for line in handle if not line.startswith('#'))][1:]
        if not rows:
            return cls.zero()
        breakpoints = [float(r[0]) for r in rows]
        values = [float(rows[0][1])] + [float(r[2]) for r in rows]
        return cls(breakpoints, values)


def counting_function(eigs, normalization, merge_tolerance=None):
    """
    N(λ) = #{i : λ_i < λ} / normalization.

    Eigenvalues closer than merge_tolerance·(spectral width) to their
    predecessor are merged into one jump at the cluster's smallest member.
    """
    normalization = float(normalization)
    if not normalization > 0:
        raise DomainError(f"normalization must be > 0, got {normalization}")
    eigs = np.sort(np.asarray(eigs, dtype=np.float64).reshape(-1))
    if eigs.size == 0:
        return DistributionFunction.zero()
    if merge_tolerance is None:
        merge_tolerance = tolerance('eigenvalue_merge', 1e-8)
    width = float(eigs[-1] - eigs[0])
    starts = np.concatenate([[True], np.diff(eigs) > merge_tolerance * width])
    locations = eigs[starts]
    counts = np.diff(np.append(np.flatnonzero(starts), eigs.size))
    return DistributionFunction(locations, np.concatenate([[0.0], np.cumsum(counts)]) / normalization)


def mixture(functions, weights):
    """Σ w_k N_k, e.g. the counting function of a block-diagonal operator."""
    total = DistributionFunction.zero()
    for function, weight in zip(functions, weights):
        total = total + function.scaled(weight)
    return total


def laplace_transform(function, t):
    """∫ e^{-tλ} dN(λ), exact for step functions."""
    t = float(t)
    if not t > 0:
        raise DomainError(f"Laplace transforms need t > 0, got {t}")
    return float(np.dot(np.exp(-t * function.jump_locations), function.jump_weights))


def laplace_gaps(first, second, t_grid):
    return np.array([abs(laplace_transform(first, t) - laplace_transform(second, t)) for t in t_grid])


def laplace_agreement(first, second, t_grid):
    """max over t of |L_1(t) - L_2(t)|."""
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.size == 0:
        raise DomainError("the t grid is empty")
    return float(laplace_gaps(first, second, t_grid).max())


@dataclass
class CdfDistance:
    distance: float
    admitted: np.ndarray
    excluded: np.ndarray
    gaps: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        return {
            'distance': self.distance,
            'admitted': int(self.admitted.size),
            'excluded': [float(v) for v in self.excluded],
        }


def jump_adjacent(grid, functions, radius, jump_floor):
    """Mask of grid points within `radius` of a jump of weight ≥ jump_floor in any function."""
    grid = np.asarray(grid, dtype=np.float64)
    mask = np.zeros(grid.size, dtype=bool)
    for function in functions:
        big = function.jump_locations[function.jump_weights >= jump_floor]
        if big.size == 0:
            continue
        pos = np.searchsorted(big, grid)
        left = np.abs(grid - big[np.clip(pos - 1, 0, big.size - 1)])
        right = np.abs(big[np.clip(pos, 0, big.size - 1)] - grid)
        mask |= np.minimum(left, right) <= radius
    return mask


def grid_pitch(grid):
    grid = np.asarray(grid, dtype=np.float64)
    return float(np.min(np.diff(grid))) if grid.size > 1 else 0.0


def cdf_distance(first, second, grid, radius=None, jump_floor=None):
    """
    sup |N_1 - N_2| over grid points away from jumps.

    A grid point is excluded when it lies within `radius` (default: the
    configured number of grid pitches) of a jump of weight ≥ jump_floor
    in either function.
    """
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise DomainError("the evaluation grid is empty")
    if radius is None:
        radius = tolerance('continuity_pitches', 2) * grid_pitch(grid)
    if jump_floor is None:
        jump_floor = tolerance('jump_mass_floor', 5e-3)
    excluded = jump_adjacent(grid, (first, second), radius, jump_floor)
    if excluded.all():
        raise DegenerateGridError(f"all {grid.size} grid points lie within {radius:g} of a jump")
    admitted = grid[~excluded]
    gaps = np.abs(first(admitted) - second(admitted))
    if excluded.any():
        logger.debug(f"cdf_distance excluded {int(excluded.sum())} jump-adjacent grid points")
    return CdfDistance(distance=float(gaps.max()), admitted=admitted, excluded=grid[excluded], gaps=gaps)


def refine_grid(grid, locations, pitch=None):
    """Add points a quarter pitch either side of each location inside the grid range."""
    grid = np.asarray(grid, dtype=np.float64)
    if pitch is None:
        pitch = grid_pitch(grid)
    if len(locations) == 0 or pitch == 0:
        return grid
    extra = np.concatenate([np.asarray(locations) - pitch / 4, np.asarray(locations) + pitch / 4])
    extra = extra[(extra >= grid[0]) & (extra <= grid[-1])]
    return np.unique(np.concatenate([grid, extra]))

