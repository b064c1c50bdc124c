# dos/abstract.py
"""
Monte-Carlo estimate of the abstract density of states
ρ_H(]-∞, λ[) = E[tr(χ_D E_H(]-∞, λ[))], with the infinite-volume operator
replaced by H_ω on the fundamental domain D padded by a margin of sites.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from django.conf import settings

from dos.parallel import realization_local_measure, run_parallel
from spectra.distributions import DistributionFunction, tolerance
from spectra.eigen import check_size

logger = logging.getLogger(__name__)

PADDING_TOO_SMALL = 'padding-too-small'
PADDING_CHECK_SKIPPED = 'padding-check-skipped'


@dataclass
class DosEstimate:
    """ρ̂(]-∞, λ[) on a grid with standard errors and the per-seed local spectral measures."""

    spec: object
    domain: object
    padding: int
    realizations: int
    lambda_grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    measures: list = field(repr=False)
    flags: list = field(default_factory=list)
    padding_shift: float = None

    @property
    def domain_volume(self):
        """|D|."""
        return self.domain.site_count

    @property
    def tau_identity(self):
        """Seed mean of tr(χ_D), the estimate of τ(Id)."""
        return float(np.mean([w.sum() for _, w in self.measures])) if self.measures else 0.0

    @property
    def tau_identity_stderr(self):
        totals = [w.sum() for _, w in self.measures]
        return float(np.std(totals, ddof=1) / np.sqrt(len(totals))) if len(totals) > 1 else 0.0

    def function(self):
        """ρ̂ as an exact step function: the seed mean of the local spectral measures."""
        if not self.measures:
            return DistributionFunction.zero()
        locations = np.concatenate([v for v, _ in self.measures])
        weights = np.concatenate([w for _, w in self.measures]) / len(self.measures)
        keep = weights > 0
        return DistributionFunction.from_jumps(locations[keep], weights[keep])

    def csv_rows(self):
        return [(float(lam), float(v), float(s)) for lam, v, s in zip(self.lambda_grid, self.values, self.stderr)]

    def summary(self):
        return {
            'model': self.spec.model,
            'domain': self.domain.as_dict(),
            'padding': self.padding,
            'realizations': self.realizations,
            'tau_identity': self.tau_identity,
            'tau_identity_stderr': self.tau_identity_stderr,
            'padding_shift': self.padding_shift,
            'flags': self.flags,
        }


def _cumulative(values, weights, grid):
    """Σ weights[values < λ] for every λ of the grid."""
    order = np.argsort(values, kind='stable')
    totals = np.concatenate([[0.0], np.cumsum(weights[order])])
    return totals[np.searchsorted(values[order], grid, side='left')]


def _estimate(spec, domain, padding, realizations, grid, workers):
    padded = domain.grown(padding)
    check_size(padded.site_count)
    tasks = [(spec, padded, domain, k) for k in range(realizations)]
    results = run_parallel(realization_local_measure, tasks, workers)
    measures = [(values, weights) for values, weights, _ in results]
    samples = np.array([_cumulative(values, weights, grid) for values, weights in measures])
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(realizations) if realizations > 1 else np.zeros(len(grid))
    return measures, mean, stderr


def abstract_dos(spec, lambda_grid, padding, box, realizations, workers=None, check_padding=True):
    """
    ρ̂_H(]-∞, λ[) for λ on the grid, D = `box` and H_ω built on D grown by
    `padding` sites.

    The padding is checked by redoing the estimate with twice the padding;
    when any grid value moves by more than the configured number of
    combined standard errors the estimate is flagged 'padding-too-small'.
    The check is skipped (and flagged) when the doubled box exceeds the
    dense threshold.
    """
    if lambda_grid is None:
        lambda_grid = spec.default_lambda_grid(region=box.grown(padding), realizations=realizations)
    grid = np.asarray(lambda_grid, dtype=np.float64)
    padding = int(padding)
    realizations = int(realizations)
    logger.info(f"Abstract DOS: {spec.model}, D={box}, padding {padding}, {realizations} realizations")
    measures, mean, stderr = _estimate(spec, box, padding, realizations, grid, workers)
    estimate = DosEstimate(
        spec=spec, domain=box, padding=padding, realizations=realizations,
        lambda_grid=grid, values=mean, stderr=stderr, measures=measures,
    )
    if not check_padding:
        return estimate

    doubled = box.grown(2 * padding)
    if doubled.site_count > getattr(settings, 'IDS_DENSE_THRESHOLD', 4096):
        logger.warning(f"Padding check skipped: {doubled} exceeds the dense threshold")
        estimate.flags.append(PADDING_CHECK_SKIPPED)
        return estimate
    _, mean2, stderr2 = _estimate(spec, box, 2 * padding, realizations, grid, workers)
    shift = np.abs(mean2 - mean)
    sigma = tolerance('padding_sigma', 3.0)
    estimate.padding_shift = float(shift.max())
    if np.any(shift > sigma * np.hypot(stderr, stderr2) + 1e-12):
        logger.warning(f"Doubling the padding moved ρ̂ by up to {estimate.padding_shift:.3g}")
        estimate.flags.append(PADDING_TOO_SMALL)
    return estimate
