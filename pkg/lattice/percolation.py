# lattice/percolation.py
"""Site percolation realizations on lattice boxes: sampling, translation, clusters, JSON records."""

import base64
from dataclasses import dataclass
import logging

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from core.exceptions import DomainError, OutOfRangeError
from lattice.boxes import LatticeBox
from lattice.rng import STREAM_OCCUPATION, site_uniforms

logger = logging.getLogger(__name__)

TORUS = 'torus'
WINDOW = 'window'


@dataclass(frozen=True, eq=False)
class PercolationConfig:
    """One disorder realization ω restricted to a box: occupied[i] is ω at site i."""

    box: LatticeBox
    p: float
    seed: int
    occupied: np.ndarray

    def __post_init__(self):
        occupied = np.asarray(self.occupied, dtype=bool).copy()
        if occupied.shape != (self.box.site_count,):
            raise DomainError(
                f"occupancy has {occupied.size} entries for a box of {self.box.site_count} sites"
            )
        occupied.setflags(write=False)
        object.__setattr__(self, 'occupied', occupied)

    def __eq__(self, other):
        if not isinstance(other, PercolationConfig):
            return NotImplemented
        return (
            self.box == other.box
            and self.p == other.p
            and self.seed == other.seed
            and np.array_equal(self.occupied, other.occupied)
        )

    __hash__ = None

    @property
    def occupied_count(self):
        return int(self.occupied.sum())

    @property
    def occupied_indices(self):
        return np.flatnonzero(self.occupied)

    @property
    def occupied_coordinates(self):
        """X(ω) ∩ box, as coordinates in site-index order."""
        return self.box.coordinates[self.occupied]

    def grid(self):
        return self.occupied.reshape(self.box.sides)

    def to_record(self):
        """Compact JSON record; the bitmap is packed MSB-first in site-index order."""
        packed = np.packbits(self.occupied.astype(np.uint8), bitorder='big')
        return {
            'd': self.box.dimension,
            'sides': list(self.box.sides),
            'offset': list(self.box.offset),
            'p': self.p,
            'seed': self.seed,
            'occupied': base64.b64encode(packed.tobytes()).decode('ascii'),
        }

    @classmethod
    def from_record(cls, record):
        box = LatticeBox(tuple(record['sides']), tuple(record['offset']))
        if int(record['d']) != box.dimension:
            raise DomainError(f"record dimension {record['d']} does not match sides {record['sides']}")
        packed = np.frombuffer(base64.b64decode(record['occupied']), dtype=np.uint8)
        bits = np.unpackbits(packed, bitorder='big', count=box.site_count)
        return cls(box=box, p=float(record['p']), seed=int(record['seed']), occupied=bits.astype(bool))


def sample_percolation(box, p, seed):
    """
    Occupy each site independently with probability p.

    Site x is occupied iff u(seed, x) < p, where u is the counter-based
    uniform of lattice.rng. The value at x does not depend on the box, so a
    sub-box sample equals the restriction of a larger sample.
    """
    p = float(p)
    if not 0.0 <= p <= 1.0 or np.isnan(p):
        raise DomainError(f"percolation probability must lie in [0, 1], got {p}")
    uniforms = site_uniforms(seed, box.coordinates, STREAM_OCCUPATION)
    return PercolationConfig(box=box, p=p, seed=int(seed), occupied=uniforms < p)


def translate_config(config, shift, mode=TORUS, window=None):
    """
    Translate a configuration by `shift`: occupied'(x + shift) = occupied(x).

    In torus mode the box is periodic and the result lives on the same box.
    In window mode only `window` (a sub-box) is carried; the result lives on
    window + shift, which must stay inside the original box.
    """
    shift = tuple(int(s) for s in shift)
    box = config.box
    if len(shift) != box.dimension:
        raise DomainError(f"shift {shift} does not match dimension {box.dimension}")

    if mode == TORUS:
        rolled = np.roll(config.grid(), shift, axis=tuple(range(box.dimension)))
        return PercolationConfig(box=box, p=config.p, seed=config.seed, occupied=rolled.ravel())

    if mode == WINDOW:
        if window is None:
            raise DomainError("window mode needs a window sub-box")
        if not box.contains_box(window):
            raise OutOfRangeError(f"window {window} is not inside {box}")
        target = window.shifted(shift)
        if not box.contains_box(target):
            raise OutOfRangeError(f"shift {shift} moves window {window} out of {box}")
        source_idx = np.array([box.index_of(c) for c in window.coordinates], dtype=np.int64)
        return PercolationConfig(box=target, p=config.p, seed=config.seed, occupied=config.occupied[source_idx])

    raise DomainError(f"unknown translation mode {mode!r}")


def is_translation_invariant(config, shift):
    """True when the torus translate of `config` by `shift` equals `config` (Ω_γ membership)."""
    return bool(np.array_equal(translate_config(config, shift).occupied, config.occupied))


def occupied_graph(config, periodic=False):
    """Sparse adjacency of the induced subgraph on occupied sites, in occupied order."""
    occ = config.occupied
    pairs = config.box.neighbour_pairs(periodic=periodic)
    keep = occ[pairs[:, 0]] & occ[pairs[:, 1]]
    pairs = pairs[keep]
    relabel = np.full(config.box.site_count, -1, dtype=np.int64)
    relabel[occ] = np.arange(config.occupied_count)
    rows, cols = relabel[pairs[:, 0]], relabel[pairs[:, 1]]
    n = config.occupied_count
    return coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()


def clusters(config, periodic=False):
    """
    Connected components of the induced subgraph on occupied sites.

    Returns lists of site indices (into the box), each sorted, ordered by
    their smallest index.
    """
    n = config.occupied_count
    if n == 0:
        return []
    graph = occupied_graph(config, periodic=periodic)
    count, labels = connected_components(graph, directed=False)
    sites = config.occupied_indices
    components = [[] for _ in range(count)]
    for site, label in zip(sites, labels):
        components[label].append(int(site))
    components.sort(key=lambda c: c[0])
    logger.debug(f"{count} clusters among {n} occupied sites")
    return components
