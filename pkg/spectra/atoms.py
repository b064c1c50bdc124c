# spectra/atoms.py
"""
Point parts of step measures.

The atomic part of a measure is the limit, as the allowed number k of
intervals grows and their length shrinks, of the largest mass that k
short disjoint intervals can capture. At finite resolution this module
picks up to k_max disjoint intervals of length ≤ length_floor greedily by
captured mass and reports an atom at the centroid of every interval whose
mass reaches mass_floor. An exact dynamic-programming search over the
same intervals serves as the oracle for small inputs.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DomainError
from spectra.distributions import DistributionFunction

EXHAUSTIVE_JUMP_CAP = 50


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Σ w_i δ_{x_i} with strictly increasing locations and positive weights."""

    locations: np.ndarray
    weights: np.ndarray
    certificate: dict = field(default=None)

    def __post_init__(self):
        locations = np.array(self.locations, dtype=np.float64).reshape(-1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if locations.shape != weights.shape:
            raise DomainError("atom locations and weights differ in length")
        if np.any(np.diff(locations) <= 0):
            raise DomainError("atom locations must be strictly increasing")
        if np.any(weights <= 0):
            raise DomainError("atom weights must be positive")
        locations.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'locations', locations)
        object.__setattr__(self, 'weights', weights)

    @property
    def total(self):
        return float(self.weights.sum())

    def __len__(self):
        return self.locations.size

    def as_distribution(self):
        return DistributionFunction.from_jumps(self.locations, self.weights)

    def csv_rows(self):
        return [(float(x), float(w)) for x, w in zip(self.locations, self.weights)]

    def write_csv(self, path, header_lines=()):
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            for line in header_lines:
                handle.write(f"# {line}\n")
            writer = csv.writer(handle)
            writer.writerow(['location', 'weight'])
            for row in self.csv_rows():
                writer.writerow([repr(v) for v in row])


def _check_parameters(k_max, length_floor, mass_floor):
    if int(k_max) < 1:
        raise DomainError(f"k_max must be ≥ 1, got {k_max}")
    if not length_floor > 0:
        raise DomainError(f"length_floor must be > 0, got {length_floor}")
    if not mass_floor > 0:
        raise DomainError(f"mass_floor must be > 0, got {mass_floor}")


def _jumps(measure):
    if isinstance(measure, AtomicMeasure):
        return measure.locations, measure.weights
    weights = measure.jump_weights
    keep = weights > 0
    return measure.jump_locations[keep], weights[keep]


def _best_window(locations, cumulative, lo, hi, length):
    """Heaviest run locations[i..j] with lo <= i <= j < hi and span ≤ length."""
    best = (0.0, None, None)
    i = lo
    for j in range(lo, hi):
        while locations[j] - locations[i] > length:
            i += 1
        mass = cumulative[j + 1] - cumulative[i]
        if mass > best[0]:
            best = (mass, i, j)
    return best


def _atom(locations, weights, i, j):
    mass = float(weights[i:j + 1].sum())
    return float(np.dot(locations[i:j + 1], weights[i:j + 1]) / mass), mass


def _atomic(atoms, mass_floor, certificate):
    atoms = sorted(a for a in atoms if a[1] >= mass_floor)
    return AtomicMeasure(
        locations=[a[0] for a in atoms], weights=[a[1] for a in atoms], certificate=certificate,
    )


def point_part(measure, k_max, length_floor, mass_floor):
    """
    Greedy finite-resolution point part of a step measure.

    Intervals never share a jump, so their tight hulls are disjoint. The
    certificate records the mass captured by all greedy intervals and the
    heaviest single interval, which bounds the gap to the exact k-interval
    supremum.
    """
    _check_parameters(k_max, length_floor, mass_floor)
    locations, weights = _jumps(measure)
    cumulative = np.concatenate([[0.0], np.cumsum(weights)])
    free_runs = [(0, locations.size)]
    chosen = []
    for _ in range(int(k_max)):
        best = (0.0, None, None, None)
        for run_index, (lo, hi) in enumerate(free_runs):
            mass, i, j = _best_window(locations, cumulative, lo, hi, length_floor)
            if mass > best[0]:
                best = (mass, i, j, run_index)
        mass, i, j, run_index = best
        if i is None:
            break
        chosen.append((i, j))
        lo, hi = free_runs.pop(run_index)
        free_runs[run_index:run_index] = [run for run in ((lo, i), (j + 1, hi)) if run[1] > run[0]]

    atoms = [_atom(locations, weights, i, j) for i, j in chosen]
    certificate = {
        'k_max': int(k_max),
        'length_floor': float(length_floor),
        'intervals': len(chosen),
        'captured_mass': float(sum(mass for _, mass in atoms)),
        'largest_interval_mass': float(max((mass for _, mass in atoms), default=0.0)),
    }
    return _atomic(atoms, mass_floor, certificate)


def max_interval_mass(measure, k, length_floor):
    """
    Exact supremum of the mass captured by k disjoint intervals of length
    ≤ length_floor, with the maximizing jump runs. Limited to small inputs.
    """
    locations, weights = _jumps(measure)
    n = locations.size
    if n > EXHAUSTIVE_JUMP_CAP:
        raise DomainError(f"exhaustive interval search is limited to {EXHAUSTIVE_JUMP_CAP} jumps, got {n}")
    cumulative = np.concatenate([[0.0], np.cumsum(weights)])
    # best[c][m]: heaviest c runs among the first m jumps
    best = np.zeros((k + 1, n + 1))
    choice = {}
    for c in range(1, k + 1):
        for m in range(1, n + 1):
            best[c, m] = best[c, m - 1]
            j = m - 1
            for i in range(j, -1, -1):
                if locations[j] - locations[i] > length_floor:
                    break
                candidate = best[c - 1, i] + cumulative[j + 1] - cumulative[i]
                if candidate > best[c, m]:
                    best[c, m] = candidate
                    choice[c, m] = (i, j)
    runs = []
    c, m = k, n
    while c > 0 and m > 0:
        if (c, m) in choice and best[c, m] != best[c, m - 1]:
            i, j = choice[c, m]
            runs.append((i, j))
            c, m = c - 1, i
        else:
            m -= 1
    return float(best[k, n]), sorted(runs)


def point_part_exhaustive(measure, k_max, length_floor, mass_floor):
    """Point part from the exact k-interval search; the oracle for `point_part`."""
    _check_parameters(k_max, length_floor, mass_floor)
    locations, weights = _jumps(measure)
    mass, runs = max_interval_mass(measure, int(k_max), length_floor)
    atoms = [_atom(locations, weights, i, j) for i, j in runs]
    return _atomic(atoms, mass_floor, {'k_max': int(k_max), 'length_floor': float(length_floor), 'captured_mass': mass})
