# operators/ensembles.py
"""Random operator families (H_ω)_ω: model parameters, realization seeds and finite-volume builds."""

from dataclasses import asdict, dataclass
import logging

import numpy as np

from core.exceptions import DomainError
from delone.point_sets import fibonacci_chain, perturbed_degree_bound, perturbed_lattice
from delone.voronoi import voronoi_adjacency
from lattice.percolation import sample_percolation
from lattice.rng import STREAM_DISPLACEMENT_X, mix, site_uniforms
from operators.matrices import anderson_operator, delone_operator, percolation_operator, restrict

logger = logging.getLogger(__name__)

PERCOLATION_VARIANTS = {
    'percolation-adjacency': 'adjacency',
    'percolation-laplacian': 'laplacian',
    'percolation-dirichlet-laplacian': 'dirichlet-laplacian',
}
ANDERSON = 'anderson'
DELONE = 'delone-voronoi'
MODELS = tuple(PERCOLATION_VARIANTS) + (ANDERSON, DELONE)

PERTURBED_LATTICE = 'perturbed-lattice'
FIBONACCI = 'fibonacci'

# Extra sites generated around a Delone region so its Voronoi cells are complete.
DELONE_MARGIN = 3


@dataclass(frozen=True)
class OperatorEnsembleSpec:
    """
    One model of random operators and the parameters that fix its law.

    Realization k uses seed mix(base_seed, k). Building a realization on a
    region gives H_ω restricted to that region; because the site randomness
    is counter-based, the operator on a smaller region is exactly the
    restriction of the one on a larger region.
    """

    model: str
    dimension: int = 2
    p: float = 1.0
    potential_low: float = None
    potential_high: float = None
    hopping: float = 1.0
    base_seed: int = 0
    amplitude: float = 0.0
    delone_kind: str = PERTURBED_LATTICE
    boundary: str = 'drop'

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise DomainError(f"unknown model {self.model!r}; expected one of {', '.join(MODELS)}")
        if not 1 <= int(self.dimension) <= 3:
            raise DomainError(f"dimension must be 1..3, got {self.dimension}")
        if not 0.0 <= float(self.p) <= 1.0:
            raise DomainError(f"percolation probability must lie in [0, 1], got {self.p}")
        if (self.potential_low is None) != (self.potential_high is None):
            raise DomainError("potential bounds must be given together")
        if self.potential_low is not None and float(self.potential_low) > float(self.potential_high):
            raise DomainError(f"potential bounds are inverted: [{self.potential_low}, {self.potential_high}]")
        if self.model == ANDERSON and self.potential_low is None:
            raise DomainError("the Anderson model needs potential bounds")
        if self.model == DELONE:
            if self.delone_kind == PERTURBED_LATTICE and int(self.dimension) != 2:
                raise DomainError("perturbed-lattice Delone models are two-dimensional")
            if self.delone_kind == FIBONACCI and int(self.dimension) != 1:
                raise DomainError("Fibonacci Delone models are one-dimensional")
            if self.delone_kind not in (PERTURBED_LATTICE, FIBONACCI):
                raise DomainError(f"unknown Delone kind {self.delone_kind!r}")
            if not 0.0 <= float(self.amplitude) < 0.5:
                raise DomainError(f"amplitude must lie in [0, 1/2), got {self.amplitude}")
            if self.boundary not in ('keep', 'drop'):
                raise DomainError(f"boundary mode must be 'keep' or 'drop', got {self.boundary!r}")

    @property
    def is_percolation(self):
        return self.model in PERCOLATION_VARIANTS

    @property
    def is_delone(self):
        return self.model == DELONE

    @property
    def potential(self):
        if self.potential_low is None:
            return None
        return (float(self.potential_low), float(self.potential_high))

    @property
    def potential_half_width(self):
        if self.potential is None:
            return 0.0
        return (self.potential[1] - self.potential[0]) / 2.0

    def realization_seed(self, index):
        return mix(self.base_seed, index)

    def realization_seeds(self, count):
        return [self.realization_seed(k) for k in range(count)]

    def spectral_interval(self, region=None, realizations=0):
        """
        An interval containing the spectrum of every realization.

        For perturbed-lattice Delone models the a-priori degree bound is
        loose; given a region, the interval is instead the hull of the
        Gershgorin bounds of the first `realizations` builds on it, which
        also covers every sub-region.
        """
        d = int(self.dimension)
        low, high = self.potential or (0.0, 0.0)
        if self.model in ('percolation-laplacian', 'percolation-dirichlet-laplacian'):
            return low, 4.0 * d + high
        if self.is_delone:
            if self.delone_kind == FIBONACCI:
                reach = 2.0
            elif region is not None and realizations > 0:
                bounds = [self.build(region, k).gershgorin_bounds() for k in range(int(realizations))]
                return min(lo for lo, _ in bounds), max(hi for _, hi in bounds)
            else:
                reach = float(perturbed_degree_bound(self.amplitude))
            return -reach * abs(self.hopping) + low, reach * abs(self.hopping) + high
        return -2.0 * d * abs(self.hopping) + low, 2.0 * d * abs(self.hopping) + high

    def default_lambda_grid(self, points=512, region=None, realizations=0):
        """Uniform grid over the spectral interval."""
        low, high = self.spectral_interval(region, realizations)
        return np.linspace(low, high, int(points))

    def configuration(self, region, index):
        if not self.is_percolation:
            raise DomainError(f"model {self.model} has no percolation configuration")
        return sample_percolation(region, self.p, self.realization_seed(index))

    def build(self, region, index):
        """H_ω for realization `index`, restricted to the lattice box `region` (Dirichlet)."""
        if region.dimension != int(self.dimension):
            raise DomainError(f"{region} does not match model dimension {self.dimension}")
        seed = self.realization_seed(index)
        if self.is_delone:
            return self._build_delone(region, seed)
        # One extra layer keeps degrees of boundary sites those of the infinite lattice.
        grown = region.grown(1)
        if self.is_percolation:
            config = sample_percolation(grown, self.p, seed)
            op = percolation_operator(
                config, PERCOLATION_VARIANTS[self.model], hopping=self.hopping, potential=self.potential,
            )
        else:
            op = anderson_operator(grown, self.potential_low, self.potential_high, self.hopping, seed)
        return restrict(op, region)

    def _build_delone(self, region, seed):
        # 'drop': cells of the region are complete and the truncated cells at the
        # edge of the grown window are removed; 'keep': the region's own window
        # with its truncated boundary cells.
        window = region.grown(DELONE_MARGIN) if self.boundary == 'drop' else region
        if self.delone_kind == FIBONACCI:
            phase = float(site_uniforms(seed, np.zeros((1, 1), dtype=np.int64), STREAM_DISPLACEMENT_X)[0])
            points = fibonacci_chain(window.site_count, phase, start=window.offset[0])
            labels = np.arange(window.offset[0], window.offset[0] + window.site_count)[:, None]
        else:
            points = perturbed_lattice(window, self.amplitude, seed)
            labels = window.coordinates
        adjacency = voronoi_adjacency(points)
        op = delone_operator(
            adjacency, points, labels=labels, boundary=self.boundary,
            potential=self.potential, seed=seed, hopping=self.hopping,
        )
        return restrict(op, region)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        return cls(**record)
