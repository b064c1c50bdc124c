# operators/matrices.py
"""
Finite symmetric operators on lattice sites or Delone points.

An operator stores its upper triangle (diagonal included) as triplets and
mirrors it when a matrix is requested, so entry(i, j) and entry(j, i) are
the same float. Restrictions to regions are principal submatrices, the
discrete Dirichlet restriction.
"""

from collections.abc import Callable
from dataclasses import dataclass, field
import json
import logging

import numpy as np
from scipy.sparse import coo_matrix

from core.exceptions import DomainError
from lattice.boxes import LatticeBox
from lattice.percolation import occupied_graph
from lattice.rng import STREAM_POTENTIAL, site_uniforms
from spectra.eigen import check_size, eigensystem, eigenvalues

logger = logging.getLogger(__name__)

EMPTY_RESTRICTION = 'empty-restriction'


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """
    Real symmetric matrix indexed by site labels.

    `labels` is an (n, k) integer array: lattice coordinates for lattice
    models, the underlying lattice site (or chain index) for Delone points.
    `rows`, `cols`, `values` hold the upper triangle, rows <= cols, without
    explicit zeros. `positions` are the points in R^d for Delone operators.
    """

    labels: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    hopping_range: int = 0
    positions: np.ndarray = None
    flags: tuple = field(default=())

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim == 1:
            labels = labels[:, None]
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise DomainError("triplet arrays must have equal length")
        if np.any(rows > cols):
            raise DomainError("triplets must lie in the upper triangle")
        keep = values != 0.0
        rows, cols, values = rows[keep], cols[keep], values[keep]
        order = np.lexsort((cols, rows))
        arrays = {'labels': labels, 'rows': rows[order], 'cols': cols[order], 'values': values[order]}
        if self.positions is not None:
            positions = np.asarray(self.positions, dtype=np.float64)
            arrays['positions'] = positions if positions.ndim == 2 else positions[:, None]
        for name, array in arrays.items():
            array = np.array(array, copy=True)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, 'flags', tuple(self.flags))

    @classmethod
    def from_dense(cls, matrix, labels=None, hopping_range=None):
        """Operator from a symmetric dense matrix; the upper triangle is taken as given."""
        matrix = np.asarray(matrix, dtype=np.float64)
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise DomainError(f"expected a square matrix, got shape {matrix.shape}")
        rows, cols = np.triu_indices(n)
        if labels is None:
            labels = np.arange(n)[:, None]
        if hopping_range is None:
            hopping_range = 1 if np.any(np.triu(matrix, 1)) else 0
        return cls(labels=labels, rows=rows, cols=cols, values=matrix[rows, cols], hopping_range=hopping_range)

    @property
    def dimension(self):
        return self.labels.shape[0]

    def __len__(self):
        return self.dimension

    def to_sparse(self):
        n = self.dimension
        off = self.rows != self.cols
        rows = np.concatenate([self.rows, self.cols[off]])
        cols = np.concatenate([self.cols, self.rows[off]])
        values = np.concatenate([self.values, self.values[off]])
        return coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()

    def to_dense(self):
        check_size(self.dimension)
        matrix = np.zeros((self.dimension, self.dimension))
        matrix[self.rows, self.cols] = self.values
        matrix[self.cols, self.rows] = self.values
        return matrix

    def diagonal(self):
        diag = np.zeros(self.dimension)
        on = self.rows == self.cols
        diag[self.rows[on]] = self.values[on]
        return diag

    def trace(self):
        return float(self.diagonal().sum())

    def gershgorin_bounds(self):
        """(lower, upper) enclosing the spectrum."""
        if self.dimension == 0:
            return 0.0, 0.0
        diag = self.diagonal()
        radius = np.zeros(self.dimension)
        off = self.rows != self.cols
        np.add.at(radius, self.rows[off], np.abs(self.values[off]))
        np.add.at(radius, self.cols[off], np.abs(self.values[off]))
        return float((diag - radius).min()), float((diag + radius).max())

    def label_tuples(self):
        return [tuple(int(v) for v in row) for row in self.labels]

    def with_flag(self, flag):
        return SymmetricOperator(
            labels=self.labels, rows=self.rows, cols=self.cols, values=self.values,
            hopping_range=self.hopping_range, positions=self.positions, flags=self.flags + (flag,),
        )

    def write_coordinate_format(self, path, extra=None):
        """Text export: a JSON header line, then one `i j value` line per stored entry."""
        header = dict(extra or {})
        header.update({
            'dimension': self.dimension,
            'hopping_range': self.hopping_range,
            'labels': self.labels.tolist(),
            'symmetric': 'upper',
        })
        if self.positions is not None:
            header['positions'] = self.positions.tolist()
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write('# ' + json.dumps(header, sort_keys=True) + '\n')
            for i, j, v in zip(self.rows, self.cols, self.values):
                handle.write(f"{int(i)} {int(j)} {float(v)!r}\n")

    @classmethod
    def read_coordinate_format(cls, path):
        with open(path, encoding='utf-8') as handle:
            header = json.loads(handle.readline()[2:])
            rows, cols, values = [], [], []
            for line in handle:
                if line.strip():
                    i, j, v = line.split()
                    rows.append(int(i))
                    cols.append(int(j))
                    values.append(float(v))
        labels = np.asarray(header['labels'], dtype=np.int64).reshape(header['dimension'], -1)
        return cls(
            labels=labels, rows=rows, cols=cols, values=values,
            hopping_range=header['hopping_range'], positions=header.get('positions'),
        )


def _region_mask(op, region):
    if region is None:
        return np.ones(op.dimension, dtype=bool)
    if isinstance(region, LatticeBox):
        if op.labels.shape[1] != region.dimension:
            raise DomainError(f"{region} does not match labels of width {op.labels.shape[1]}")
        return region.mask(op.labels) if op.dimension else np.zeros(0, dtype=bool)
    if hasattr(region, 'contains') and op.positions is not None:
        # a delone.point_sets.Window over the point positions
        return region.contains(op.positions) if op.dimension else np.zeros(0, dtype=bool)
    if isinstance(region, Callable):
        return np.asarray(region(op.labels), dtype=bool).reshape(op.dimension)
    wanted = {tuple(int(v) for v in np.atleast_1d(label)) for label in region}
    return np.array([label in wanted for label in op.label_tuples()], dtype=bool)


def restrict(op, region):
    """
    Principal submatrix of `op` on the sites selected by `region`.

    `region` is a LatticeBox (matched against labels), a Window (matched
    against positions), a predicate over the (n, k) label array, or an
    iterable of labels. An empty selection gives a 0x0 operator flagged
    'empty-restriction'.
    """
    mask = _region_mask(op, region)
    if mask.all():
        return op
    relabel = np.full(op.dimension, -1, dtype=np.int64)
    relabel[mask] = np.arange(int(mask.sum()))
    keep = mask[op.rows] & mask[op.cols]
    positions = op.positions[mask] if op.positions is not None else None
    restricted = SymmetricOperator(
        labels=op.labels[mask],
        rows=relabel[op.rows[keep]],
        cols=relabel[op.cols[keep]],
        values=op.values[keep],
        hopping_range=op.hopping_range,
        positions=positions,
        flags=op.flags,
    )
    if restricted.dimension == 0:
        logger.warning(f"Restriction of a {op.dimension}-site operator to {region} is empty")
        restricted = restricted.with_flag(EMPTY_RESTRICTION)
    return restricted


def _graph_operator(labels, pairs, diagonal, hopping, positions=None):
    n = len(labels)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    hopping = float(hopping)
    off_rows = pairs[:, 0] if hopping != 0.0 else np.zeros(0, dtype=np.int64)
    off_cols = pairs[:, 1] if hopping != 0.0 else np.zeros(0, dtype=np.int64)
    diag_index = np.arange(n)
    return SymmetricOperator(
        labels=labels,
        rows=np.concatenate([diag_index, off_rows]),
        cols=np.concatenate([diag_index, off_cols]),
        values=np.concatenate([np.asarray(diagonal, dtype=np.float64), np.full(len(off_rows), hopping)]),
        hopping_range=1 if len(off_rows) else 0,
        positions=positions,
    )


def uniform_potential(seed, labels, low, high):
    """i.i.d. uniform values on [low, high] attached to labels through the site RNG."""
    low, high = float(low), float(high)
    if low > high:
        raise DomainError(f"potential bounds are inverted: [{low}, {high}]")
    if len(labels) == 0:
        return np.zeros(0)
    if low == high:
        return np.full(len(labels), low)
    return low + (high - low) * site_uniforms(seed, labels, STREAM_POTENTIAL)


def _occupied_pairs(config, periodic):
    graph = occupied_graph(config, periodic=periodic).tocoo()
    upper = graph.row < graph.col
    return np.stack([graph.row[upper], graph.col[upper]], axis=1)


def percolation_operator(config, variant='adjacency', hopping=1.0, potential=None, periodic=False):
    """
    Operators on the occupied sites of a percolation configuration.

    variant 'adjacency' is hopping·A_ω; 'laplacian' is Deg - A_ω with the
    degree taken in the induced subgraph; 'dirichlet-laplacian' is
    2d·Id - A_ω. `potential` = (low, high) adds an i.i.d. uniform diagonal
    drawn with the configuration's seed.
    """
    labels = config.occupied_coordinates
    pairs = _occupied_pairs(config, periodic)
    n = len(labels)
    if variant == 'adjacency':
        diagonal, off = np.zeros(n), hopping
    elif variant == 'laplacian':
        degree = np.bincount(pairs.ravel(), minlength=n).astype(np.float64)
        diagonal, off = degree, -1.0
    elif variant == 'dirichlet-laplacian':
        diagonal, off = np.full(n, 2.0 * config.box.dimension), -1.0
    else:
        raise DomainError(f"unknown percolation operator variant {variant!r}")
    if potential is not None:
        diagonal = diagonal + uniform_potential(config.seed, labels, *potential)
    return _graph_operator(labels, pairs, diagonal, off)


def adjacency_operator(config, periodic=False):
    """A_ω: 1 between occupied nearest neighbours, 0 elsewhere."""
    return percolation_operator(config, 'adjacency', periodic=periodic)


def laplacian_operator(config, periodic=False):
    return percolation_operator(config, 'laplacian', periodic=periodic)


def dirichlet_laplacian_operator(config, periodic=False):
    return percolation_operator(config, 'dirichlet-laplacian', periodic=periodic)


def anderson_operator(box, potential_low, potential_high, hopping, seed, periodic=False):
    """hopping on nearest neighbours of `box` plus an i.i.d. uniform potential on [low, high]."""
    labels = box.coordinates
    diagonal = uniform_potential(seed, labels, potential_low, potential_high)
    return _graph_operator(labels, box.neighbour_pairs(periodic=periodic), diagonal, hopping)


def delone_operator(adjacency, delone=None, labels=None, boundary='keep', potential=None, seed=0, hopping=1.0):
    """
    Nearest-neighbour operator of a Delone set: hopping where Voronoi cells
    share a face.

    boundary='drop' removes cells flagged as boundary by the adjacency.
    `labels` default to point indices; `potential` = (low, high) adds an
    i.i.d. uniform diagonal keyed by label.
    """
    if labels is None:
        labels = np.arange(adjacency.size)[:, None]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 1:
        labels = labels[:, None]
    pairs = np.array(sorted(adjacency.pairs), dtype=np.int64).reshape(-1, 2)
    diagonal = np.zeros(adjacency.size)
    if potential is not None:
        diagonal = uniform_potential(seed, labels, *potential)
    positions = delone.points if delone is not None else None
    op = _graph_operator(labels, pairs, diagonal, hopping, positions=positions)
    if boundary == 'drop':
        interior = ~adjacency.boundary
        return restrict(op, lambda _labels: interior)
    if boundary != 'keep':
        raise DomainError(f"boundary mode must be 'keep' or 'drop', got {boundary!r}")
    return op


def heat_semigroup(op, t):
    """
    e^{-tH} as a dense matrix from the full spectral decomposition.

    t = 0 gives exactly the identity.
    """
    t = float(t)
    if not t >= 0.0:
        raise DomainError(f"semigroup time must be ≥ 0, got {t}")
    check_size(op.dimension)
    if t == 0.0:
        return np.eye(op.dimension)
    values, vectors = eigensystem(op)
    semigroup = (vectors * np.exp(-t * values)) @ vectors.T
    return (semigroup + semigroup.T) / 2.0


def heat_trace(op, t):
    """tr(e^{-tH})."""
    t = float(t)
    if not t >= 0.0:
        raise DomainError(f"semigroup time must be ≥ 0, got {t}")
    return float(np.exp(-t * eigenvalues(op)).sum())


def local_spectral_measure(op, domain_sites):
    """
    Eigenvalues λ_k of `op` with weights Σ_{x∈D} |v_k(x)|^2.

    Sites of D missing from `op` contribute nothing.
    """
    mask = _region_mask(op, domain_sites)
    if op.dimension == 0:
        return np.zeros(0), np.zeros(0)
    values, vectors = eigensystem(op)
    weights = np.sum(vectors[mask, :] ** 2, axis=0)
    return values, weights


def localized_trace(function, op, domain_sites):
    """tr(χ_D F(H)) = Σ_{x∈D} <δ_x, F(H) δ_x>."""
    values, weights = local_spectral_measure(op, domain_sites)
    return float(np.dot(weights, function(values))) if len(values) else 0.0
