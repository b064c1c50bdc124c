# dos/clusters.py
"""
Finite-cluster predictions for the jumps of the percolation IDS.

Every finite cluster of the planar site-percolation graph carries its own
eigenvalues, and eigenvalues of finite clusters are exactly the ones with
finitely supported eigenfunctions. A fixed polyomino A with s sites and
site perimeter t appears as a cluster anchored at a given site with
probability p^s (1-p)^t, so per lattice site a free shape with o distinct
orientations contributes o·p^s(1-p)^t·mult_A(λ) to the jump of the IDS
at λ.
"""

from collections import defaultdict
from dataclasses import dataclass, field
import logging

import numpy as np

from core.exceptions import ConfigError, DomainError, OperatorSizeError
from dos.exhaustion import VOLUME
from lattice.boxes import LatticeBox
from lattice.percolation import PercolationConfig
from operators.ensembles import PERCOLATION_VARIANTS
from operators.matrices import percolation_operator
from spectra.atoms import point_part
from spectra.distributions import tolerance
from spectra.eigen import eigenvalues

logger = logging.getLogger(__name__)

MAX_CLUSTER_SIZE = 8
NEIGHBOURS = ((1, 0), (-1, 0), (0, 1), (0, -1))
SYMMETRIES = (
    lambda x, y: (x, y), lambda x, y: (-y, x), lambda x, y: (-x, -y), lambda x, y: (y, -x),
    lambda x, y: (-x, y), lambda x, y: (y, x), lambda x, y: (x, -y), lambda x, y: (-y, -x),
)
# Eigenvalues of different shapes closer than this are one atom.
ATOM_DECIMALS = 9
JUMP_WINDOW = 1e-6


def normalize(cells):
    """Translate so the smallest x and y are 0; return the sorted tuple."""
    min_x = min(x for x, _ in cells)
    min_y = min(y for _, y in cells)
    return tuple(sorted((x - min_x, y - min_y) for x, y in cells))


def canonical(cells):
    """Lexicographically smallest normalized image under the square's symmetry group."""
    return min(normalize([g(x, y) for x, y in cells]) for g in SYMMETRIES)


def fixed_animals(s_max):
    """All fixed polyominoes (translation classes) with 1..s_max cells, by size."""
    by_size = {1: {((0, 0),)}}
    for size in range(2, s_max + 1):
        grown = set()
        for shape in by_size[size - 1]:
            cells = set(shape)
            for x, y in shape:
                for dx, dy in NEIGHBOURS:
                    cell = (x + dx, y + dy)
                    if cell not in cells:
                        grown.add(normalize(cells | {cell}))
        by_size[size] = grown
    return by_size


def site_perimeter(cells):
    cells = set(cells)
    return len({(x + dx, y + dy) for x, y in cells for dx, dy in NEIGHBOURS} - cells)


def shape_spectrum(cells, variant='adjacency', hopping=1.0):
    """Spectrum of the cluster operator on a shape (its own induced subgraph)."""
    width = max(x for x, _ in cells) + 1
    height = max(y for _, y in cells) + 1
    box = LatticeBox((width, height))
    occupied = np.zeros(box.site_count, dtype=bool)
    for cell in cells:
        occupied[box.index_of(cell)] = True
    config = PercolationConfig(box=box, p=1.0, seed=0, occupied=occupied)
    return eigenvalues(percolation_operator(config, variant, hopping=hopping))


@dataclass
class ClusterShape:
    cells: tuple
    sites: int
    orientations: int
    perimeter: int
    spectrum: np.ndarray = field(repr=False)

    def weight(self, p):
        """Density per lattice site of clusters of this free shape."""
        return self.orientations * p ** self.sites * (1.0 - p) ** self.perimeter

    def as_dict(self, p):
        return {
            'cells': [list(c) for c in self.cells],
            'sites': self.sites,
            'orientations': self.orientations,
            'perimeter': self.perimeter,
            'spectrum': [float(v) for v in self.spectrum],
            'weight': self.weight(p),
        }


@dataclass
class ClusterAtomTable:
    s_max: int
    p: float
    variant: str
    shapes: list = field(repr=False)
    locations: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def weight_at(self, lam, window=JUMP_WINDOW):
        near = np.abs(self.locations - lam) <= window
        return float(self.weights[near].sum())

    @property
    def site_budget(self):
        """Σ over shapes of weight·sites: the probability that a site lies in a cluster of size ≤ s_max."""
        return float(sum(shape.weight(self.p) * shape.sites for shape in self.shapes))

    def csv_rows(self):
        return [(float(x), float(w)) for x, w in zip(self.locations, self.weights)]

    def as_dict(self):
        return {
            's_max': self.s_max,
            'p': self.p,
            'variant': self.variant,
            'free_shapes': len(self.shapes),
            'site_budget': self.site_budget,
            'atoms': [{'location': x, 'weight': w} for x, w in self.csv_rows()],
        }


def cluster_atom_oracle(s_max, p, d=2, variant='adjacency', hopping=1.0):
    """
    Enumerate free polyominoes up to s_max sites and aggregate their
    eigenvalues into predicted IDS jumps (per-site weights).
    """
    s_max = int(s_max)
    if d != 2:
        raise DomainError(f"cluster enumeration is implemented for d=2, got d={d}")
    if s_max > MAX_CLUSTER_SIZE:
        raise OperatorSizeError(f"s_max={s_max} exceeds the enumeration cap {MAX_CLUSTER_SIZE}", dimension=s_max)
    if s_max < 1:
        raise DomainError(f"s_max must be ≥ 1, got {s_max}")
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"percolation probability must lie in [0, 1], got {p}")

    orientations = defaultdict(int)
    for shapes in fixed_animals(s_max).values():
        for shape in shapes:
            orientations[canonical(shape)] += 1

    records = []
    atoms = defaultdict(float)
    for cells in sorted(orientations, key=lambda c: (len(c), c)):
        spectrum = shape_spectrum(cells, variant, hopping)
        shape = ClusterShape(
            cells=cells, sites=len(cells), orientations=orientations[cells],
            perimeter=site_perimeter(cells), spectrum=spectrum,
        )
        records.append(shape)
        weight = shape.weight(p)
        for lam in spectrum:
            atoms[round(float(lam), ATOM_DECIMALS) + 0.0] += weight
    locations = np.array(sorted(atoms))
    weights = np.array([atoms[x] for x in locations])
    logger.info(f"Cluster oracle: {len(records)} free shapes up to {s_max} sites, {len(locations)} atoms")
    return ClusterAtomTable(s_max=s_max, p=p, variant=variant, shapes=records, locations=locations, weights=weights)


@dataclass
class JumpComparison:
    rows: list
    unmatched: list
    passed: bool

    def as_dict(self):
        return {'atoms': self.rows, 'unmatched_empirical_jumps': self.unmatched, 'passed': self.passed}


def ids_jump_compare(ids, oracle, tol=None, sigma=3.0, slack=None):
    """
    Empirical IDS jumps at the oracle's atoms against the predicted
    weights. Each predicted atom of weight at least `tol` must be matched
    by an empirical jump of at least its weight minus `sigma` standard
    errors. The jump at 0 is also bounded above by the oracle's total
    there plus `slack`, which covers clusters larger than s_max. Heavy
    empirical jumps away from every predicted atom are listed.
    """
    spec = ids.spec
    if not spec.is_percolation or PERCOLATION_VARIANTS[spec.model] != oracle.variant:
        raise ConfigError("jump comparison needs a matching percolation model", {'model': [spec.model]})
    if spec.potential is not None or int(spec.dimension) != 2 or abs(spec.p - oracle.p) > 1e-12:
        raise ConfigError(
            "jump comparison needs a two-dimensional model without potential at the oracle's p",
            {'model.p': [f"{spec.p} != {oracle.p}"]},
        )
    if ids.normalization != VOLUME:
        raise ConfigError("jump comparison needs volume normalization", {'normalization': [ids.normalization]})
    if tol is None:
        tol = tolerance('jump_compare', 5e-3)
    if slack is None:
        slack = tolerance('jump_upper_slack', 0.01)

    functions = ids.functions[-1]
    rows = []
    passed = True
    for lam, predicted in zip(oracle.locations, oracle.weights):
        if predicted < tol:
            continue
        jumps = np.array([f.right_limit(lam + JUMP_WINDOW) - f(lam - JUMP_WINDOW) for f in functions])
        mean = float(jumps.mean())
        stderr = float(jumps.std(ddof=1) / np.sqrt(len(jumps))) if len(jumps) > 1 else 0.0
        ok = mean >= predicted - sigma * stderr - 1e-12
        upper = None
        if abs(lam) <= JUMP_WINDOW:
            upper = oracle.weight_at(0.0) + slack
            ok = ok and mean <= upper + sigma * stderr
        passed &= ok
        rows.append({
            'location': float(lam), 'predicted': float(predicted), 'upper': upper,
            'empirical': mean, 'stderr': stderr, 'passed': bool(ok),
        })

    empirical = point_part(ids.mean_function(), 64, 2 * JUMP_WINDOW, tol)
    unmatched = [
        {'location': float(x), 'weight': float(w)}
        for x, w in zip(empirical.locations, empirical.weights)
        if not np.any(np.abs(oracle.locations - x) <= 2 * JUMP_WINDOW)
    ]
    if unmatched:
        logger.info(f"{len(unmatched)} empirical jumps have no cluster below {oracle.s_max} sites")
    return JumpComparison(rows=rows, unmatched=unmatched, passed=bool(passed))
