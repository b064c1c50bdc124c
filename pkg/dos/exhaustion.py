# dos/exhaustion.py
"""
Finite-volume exhaustion of the integrated density of states.

For every scale n of a Følner sequence and every realization ω the
operator H_ω^n (H_ω restricted to A_n) is diagonalized and its counting
function N_ω^n(λ) = #{i : λ_i < λ} / normalization recorded. The
diagnostics in this module all work on the resulting IdsRun.
"""

from dataclasses import dataclass, field
from itertools import combinations
import logging
import time

import numpy as np
from scipy.spatial.distance import directed_hausdorff
from scipy.stats import linregress

from core.exceptions import DomainError, StatisticsError
from dos.parallel import realization_spectrum, run_parallel
from spectra.atoms import point_part
from spectra.distributions import counting_function, grid_pitch, mixture, refine_grid, tolerance
from spectra.eigen import check_size

logger = logging.getLogger(__name__)

VOLUME = 'volume'
OCCUPIED = 'occupied'
NORMALIZATIONS = (VOLUME, OCCUPIED)

MIN_SELF_AVERAGING_REALIZATIONS = 20
MIN_CONSTANCY_REALIZATIONS = 10

# Grid refinement looks for jumps this heavy in the largest-scale mean.
REFINE_K_MAX = 32


@dataclass
class IdsRun:
    """
    Per-scale, per-realization counting functions and their grid statistics.

    `spectra[n][k]` are the eigenvalues of realization k at scale n,
    `functions[n][k]` the counting functions, and `mean[n]`, `std[n]` the
    seed mean and standard deviation on `lambda_grid`.
    """

    spec: object
    folner: object
    realizations: int
    normalization: str
    lambda_grid: np.ndarray
    seeds: list
    volumes: list
    spectra: list = field(repr=False)
    functions: list = field(repr=False)
    mean: np.ndarray = field(repr=False, default=None)
    std: np.ndarray = field(repr=False, default=None)
    elapsed: float = 0.0
    interval: tuple = None

    @property
    def scales(self):
        return len(self.volumes)

    def mean_function(self, scale=-1):
        """Seed average of the counting functions at `scale` as a step function."""
        functions = self.functions[scale]
        return mixture(functions, [1.0 / len(functions)] * len(functions))

    def stderr(self, scale=-1):
        return self.std[scale] / np.sqrt(self.realizations)

    def spectral_interval(self):
        """Spectral interval of the model, sharpened by the realizations actually built."""
        if self.interval is None:
            self.interval = tuple(self.spec.spectral_interval(self.folner.largest_region, self.realizations))
        return self.interval

    def evaluate(self, grid, scale=-1):
        """(mean, std) of N_ω^n on an arbitrary grid; identical samples give std exactly 0."""
        samples = np.array([f(grid) for f in self.functions[scale]])
        constant = np.ptp(samples, axis=0) == 0
        mean = np.where(constant, samples[0], samples.mean(axis=0))
        if self.realizations < 2:
            return mean, np.zeros(len(grid))
        std = samples.std(axis=0, ddof=1)
        std[constant] = 0.0
        return mean, std

    def csv_rows(self):
        """(scale, volume, lambda, mean, std) for every scale and grid point."""
        rows = []
        for n in range(self.scales):
            for lam, mu, sigma in zip(self.lambda_grid, self.mean[n], self.std[n]):
                rows.append((n, self.volumes[n], float(lam), float(mu), float(sigma)))
        return rows

    def summary(self):
        return {
            'model': self.spec.model,
            'scales': self.scales,
            'volumes': self.volumes,
            'realizations': self.realizations,
            'normalization': self.normalization,
            'grid_points': int(self.lambda_grid.size),
            'seeds': [int(s) for s in self.seeds],
            'elapsed_seconds': round(self.elapsed, 3),
        }


def _normalization(mode, folner, scale, dimension):
    if mode == VOLUME:
        return folner.volume(scale)
    return dimension


def empirical_ids(spec, folner, realizations, normalization=VOLUME, lambda_grid=None, workers=None):
    """
    Diagonalize H_ω^n for every scale and realization and aggregate the
    counting functions.

    normalization 'volume' divides by |I_n|·|D|; 'occupied' divides by the
    number of sites the operator lives on, so N(+∞) = 1. Without an
    explicit grid the default model grid is used, refined around heavy
    jumps of the largest-scale mean.
    """
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    realizations = int(realizations)
    if realizations < 1:
        raise DomainError(f"at least one realization is needed, got {realizations}")
    for n, region in enumerate(folner.regions):
        check_size(region.site_count, scale=n)

    started = time.monotonic()
    regions = folner.regions
    tasks = [(spec, region, k) for region in regions for k in range(realizations)]
    logger.info(
        f"Exhaustion: {spec.model}, {len(regions)} scales up to {regions[-1]}, "
        f"{realizations} realizations, {len(tasks)} diagonalizations"
    )
    results = run_parallel(realization_spectrum, tasks, workers)

    spectra, functions = [], []
    for n in range(len(regions)):
        per_seed = results[n * realizations:(n + 1) * realizations]
        spectra.append(per_seed)
        functions.append([
            counting_function(eigs, _normalization(normalization, folner, n, len(eigs)))
            if len(eigs) else counting_function([], 1.0)
            for eigs in per_seed
        ])

    run = IdsRun(
        spec=spec,
        folner=folner,
        realizations=realizations,
        normalization=normalization,
        lambda_grid=None,
        seeds=spec.realization_seeds(realizations),
        volumes=[folner.volume(n) for n in range(len(regions))],
        spectra=spectra,
        functions=functions,
    )
    if lambda_grid is None:
        grid = spec.default_lambda_grid(region=folner.largest_region, realizations=realizations)
        jumps = point_part(
            run.mean_function(), REFINE_K_MAX, grid_pitch(grid) / 4, tolerance('jump_mass_floor', 5e-3),
        )
        lambda_grid = refine_grid(grid, jumps.locations)
    run.lambda_grid = np.asarray(lambda_grid, dtype=np.float64)
    stats = [run.evaluate(run.lambda_grid, n) for n in range(len(regions))]
    run.mean = np.array([mu for mu, _ in stats])
    run.std = np.array([sigma for _, sigma in stats])
    run.elapsed = time.monotonic() - started
    logger.info(f"Exhaustion finished in {run.elapsed:.2f}s")
    return run


@dataclass
class SelfAveragingReport:
    volumes: list
    std: np.ndarray = field(repr=False)
    ratios: list
    passed: bool

    def as_dict(self):
        return {
            'volumes': self.volumes,
            'max_std': [float(s.max()) if s.size else 0.0 for s in self.std],
            'ratios': self.ratios,
            'passed': self.passed,
        }


def self_averaging_report(ids, lambda_grid=None, slack=None):
    """
    Seed standard deviation of N_ω^n on the grid at every scale, and the
    scale-to-scale ratio of the mid-spectrum deviations against
    sqrt(V_n / V_{n+1}).
    """
    if ids.realizations < MIN_SELF_AVERAGING_REALIZATIONS:
        raise StatisticsError(
            f"self-averaging needs at least {MIN_SELF_AVERAGING_REALIZATIONS} realizations, got {ids.realizations}"
        )
    if slack is None:
        slack = tolerance('self_averaging_ratio', 0.2)
    grid = ids.lambda_grid if lambda_grid is None else np.asarray(lambda_grid, dtype=np.float64)
    std = np.array([ids.evaluate(grid, n)[1] for n in range(ids.scales)])

    low, high = ids.spectral_interval()
    centre, quarter = (low + high) / 2, (high - low) / 4
    middle = np.abs(grid - centre) <= quarter

    ratios = []
    passed = True
    for n in range(ids.scales - 1):
        expected = float(np.sqrt(ids.volumes[n] / ids.volumes[n + 1]))
        before, after = std[n][middle], std[n + 1][middle]
        if not np.any(before > 0):
            observed = 0.0 if not np.any(after > 0) else float('inf')
            ok = observed == 0.0
        else:
            observed = float(np.sqrt(np.mean(after ** 2) / np.mean(before ** 2)))
            ok = abs(observed - expected) <= slack
        passed &= ok
        ratios.append({
            'from_volume': ids.volumes[n], 'to_volume': ids.volumes[n + 1],
            'expected': expected, 'observed': observed, 'passed': bool(ok),
        })
    return SelfAveragingReport(volumes=list(ids.volumes), std=std, ratios=ratios, passed=bool(passed))


EMPTY = 'empty'
INFINITE = 'infinite'
BOUNDED = 'bounded-nonzero'


@dataclass
class DichotomyReport:
    interval: tuple
    volumes: list
    counts: list
    mean_counts: list
    slope: float
    classification: str

    @property
    def violation(self):
        return self.classification == BOUNDED

    def as_dict(self):
        return {
            'interval': list(self.interval),
            'volumes': self.volumes,
            'mean_counts': self.mean_counts,
            'slope': self.slope,
            'classification': self.classification,
            'violation': self.violation,
        }


def dichotomy_check(ids, interval):
    """
    Raw eigenvalue counts in the open interval (a, b) at every scale.

    An interval is 'empty' when no realization has eigenvalues there and
    'infinite' when the mean count grows with volume with a positive
    fitted slope; anything else is reported as a bounded nonzero count.
    """
    a, b = (float(v) for v in interval)
    if not a < b:
        raise DomainError(f"interval needs a < b, got ({a}, {b})")
    counts = [[int(np.count_nonzero((eigs > a) & (eigs < b))) for eigs in per_seed] for per_seed in ids.spectra]
    mean_counts = [float(np.mean(c)) for c in counts]
    slope = 0.0
    if not any(any(c) for c in counts):
        classification = EMPTY
    elif ids.scales < 2:
        classification = INFINITE if mean_counts[0] > 0 else EMPTY
    else:
        fit = linregress(ids.volumes, mean_counts)
        slope = float(fit.slope)
        confident = ids.scales < 3 or slope - 2 * fit.stderr > 0
        growing = mean_counts[-1] > mean_counts[0]
        classification = INFINITE if slope > 0 and confident and growing else BOUNDED
    if classification == BOUNDED:
        logger.warning(f"Interval ({a}, {b}) shows bounded nonzero counts {mean_counts}")
    return DichotomyReport(
        interval=(a, b), volumes=list(ids.volumes), counts=counts,
        mean_counts=mean_counts, slope=slope, classification=classification,
    )


def hausdorff(first, second):
    """Hausdorff distance of two finite subsets of R."""
    if len(first) == 0 and len(second) == 0:
        return 0.0
    if len(first) == 0 or len(second) == 0:
        return float('inf')
    u, v = np.asarray(first).reshape(-1, 1), np.asarray(second).reshape(-1, 1)
    return float(max(directed_hausdorff(u, v)[0], directed_hausdorff(v, u)[0]))


@dataclass
class ConstancyReport:
    ranges: list
    max_distance: list
    hull: tuple
    support: tuple
    support_gap: float
    grid_pitch: float

    def as_dict(self):
        return {
            'ranges': self.ranges,
            'max_pairwise_hausdorff': self.max_distance,
            'hull': list(self.hull),
            'support': list(self.support),
            'support_gap': self.support_gap,
            'grid_pitch': self.grid_pitch,
        }


def spectrum_constancy_report(ids):
    """
    Per-seed spectral ranges at the largest scale, the largest pairwise
    Hausdorff distance between seed spectra at every scale, and the gap
    between the hull of all eigenvalues and the support of the mean IDS
    read off the grid.
    """
    if ids.realizations < MIN_CONSTANCY_REALIZATIONS:
        raise StatisticsError(
            f"spectrum constancy needs at least {MIN_CONSTANCY_REALIZATIONS} realizations, got {ids.realizations}"
        )
    largest = ids.spectra[-1]
    ranges = [(float(e.min()), float(e.max())) if len(e) else None for e in largest]
    max_distance = [
        max((hausdorff(u, v) for u, v in combinations(per_seed, 2)), default=0.0) for per_seed in ids.spectra
    ]
    nonempty = [e for e in largest if len(e)]
    pitch = float(np.max(np.diff(ids.lambda_grid))) if len(ids.lambda_grid) > 1 else 0.0
    if not nonempty:
        return ConstancyReport(ranges, max_distance, (None, None), (None, None), 0.0, pitch)

    hull = (float(min(e.min() for e in nonempty)), float(max(e.max() for e in nonempty)))
    grid, mean = ids.lambda_grid, ids.mean[-1]
    above = np.flatnonzero(mean > 0)
    full = np.flatnonzero(mean >= mean[-1])
    support = (
        float(grid[above[0]]) if above.size else None,
        float(grid[full[0]]) if full.size else None,
    )
    gaps = [abs(h - s) for h, s in zip(hull, support) if s is not None]
    return ConstancyReport(ranges, max_distance, hull, support, float(max(gaps, default=0.0)), pitch)
