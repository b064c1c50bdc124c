# dos/checks.py
"""Trace-formula, Laplace-route, boundary-independence and uniqueness checks on the exhaustion and the abstract DOS."""

from dataclasses import dataclass, field
import logging

import numpy as np

from core.exceptions import ConfigError, DegenerateGridError, DomainError
from dos.exhaustion import VOLUME
from dos.parallel import run_parallel
from operators.functions import HeatKernel
from operators.matrices import heat_trace, localized_trace, restrict
from spectra.distributions import (
    cdf_distance,
    grid_pitch,
    jump_adjacent,
    laplace_agreement,
    laplace_transform,
    tolerance,
)

logger = logging.getLogger(__name__)

DEFAULT_BOUNDARY_PADDING = 10


def _require_same_model(ids, dos):
    if ids.spec != dos.spec:
        raise ConfigError(
            "exhaustion and DOS estimate come from different models",
            {'model': [f"{ids.spec.to_dict()} != {dos.spec.to_dict()}"]},
        )


def dos_normalization(ids, dos):
    """|D| in volume mode; the τ(Id) estimate in occupied-count mode."""
    if ids.normalization == VOLUME:
        return float(dos.domain_volume)
    return dos.tau_identity


@dataclass
class TraceFormulaReport:
    lambda_grid: np.ndarray = field(repr=False)
    ids_values: np.ndarray = field(repr=False)
    dos_values: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    admitted: np.ndarray = field(repr=False)
    max_gap: float
    tolerance: float
    passed: bool

    def csv_rows(self):
        return [
            (float(lam), float(n), float(r), float(g), float(s), bool(a))
            for lam, n, r, g, s, a in zip(
                self.lambda_grid, self.ids_values, self.dos_values, self.gaps, self.stderr, self.admitted,
            )
        ]

    def as_dict(self):
        return {
            'max_gap': self.max_gap,
            'tolerance': self.tolerance,
            'admitted_points': int(self.admitted.sum()),
            'excluded_points': int((~self.admitted).sum()),
            'passed': self.passed,
        }


def trace_formula_check(ids, dos, lambda_grid=None, tol=None):
    """
    |N_H(λ) - ρ̂_H(]-∞, λ[)/|D|| on the grid, using the largest-scale mean
    IDS. Grid points next to heavy jumps of either side are not admitted.
    """
    _require_same_model(ids, dos)
    if tol is None:
        tol = tolerance('trace_formula', 0.02)
    grid = dos.lambda_grid if lambda_grid is None else np.asarray(lambda_grid, dtype=np.float64)
    norm = dos_normalization(ids, dos)
    ids_mean, ids_std = ids.evaluate(grid)
    dos_function = dos.function()
    dos_values = dos_function(grid) / norm if norm > 0 else np.zeros(len(grid))
    dos_se = np.interp(grid, dos.lambda_grid, dos.stderr) / norm if norm > 0 else np.zeros(len(grid))
    gaps = np.abs(ids_mean - dos_values)
    stderr = np.hypot(ids_std / np.sqrt(ids.realizations), dos_se)

    radius = tolerance('continuity_pitches', 2) * grid_pitch(grid)
    floor = tolerance('jump_mass_floor', 5e-3)
    scaled_dos = dos_function.scaled(1.0 / norm) if norm > 0 else dos_function
    admitted = ~jump_adjacent(grid, (ids.mean_function(), scaled_dos), radius, floor)
    max_gap = float(gaps[admitted].max()) if admitted.any() else 0.0
    passed = max_gap <= tol
    logger.info(f"Trace formula: max gap {max_gap:.4g} at {int(admitted.sum())} continuity points (tol {tol})")
    return TraceFormulaReport(
        lambda_grid=grid, ids_values=ids_mean, dos_values=dos_values, gaps=gaps, stderr=stderr,
        admitted=admitted, max_gap=max_gap, tolerance=tol, passed=bool(passed),
    )


@dataclass
class LaplaceRouteReport:
    t_grid: list
    shift: float
    ids_transforms: list
    dos_transforms: list
    gaps: list
    shifted_gaps: list
    max_gap: float
    tolerance: float
    passed: bool

    def as_dict(self):
        return {
            't_grid': self.t_grid,
            'shift': self.shift,
            'ids_transforms': self.ids_transforms,
            'dos_transforms': self.dos_transforms,
            'gaps': self.gaps,
            'shifted_gaps': self.shifted_gaps,
            'max_gap': self.max_gap,
            'tolerance': self.tolerance,
            'passed': self.passed,
        }


def laplace_route_check(ids, dos, t_grid, tol=None):
    """
    Compare the Laplace transform of the largest-scale mean IDS with the
    mean localized heat trace τ(e^{-tH})/|D|. The tolerance applies to the
    gaps of H itself; `shifted_gaps` are the gaps for H minus its lower
    spectral bound, damped by e^{-t·shift}, for reading large t.
    """
    _require_same_model(ids, dos)
    if tol is None:
        tol = tolerance('laplace_route', 0.02)
    t_grid = [float(t) for t in t_grid]
    if not t_grid or min(t_grid) <= 0:
        raise DomainError(f"the t grid must be nonempty and positive, got {t_grid}")
    shift = max(0.0, -ids.spectral_interval()[0])
    norm = dos_normalization(ids, dos)
    ids_function = ids.mean_function()
    dos_function = dos.function()
    ids_side = [laplace_transform(ids_function, t) for t in t_grid]
    dos_side = [laplace_transform(dos_function, t) / norm if norm > 0 else 0.0 for t in t_grid]
    gaps = [abs(a - b) for a, b in zip(ids_side, dos_side)]
    shifted_gaps = [g * float(np.exp(-t * shift)) for g, t in zip(gaps, t_grid)]
    max_gap = max(gaps)
    logger.info(f"Laplace route: max gap {max_gap:.4g} over t={t_grid} (tol {tol})")
    return LaplaceRouteReport(
        t_grid=t_grid, shift=shift, ids_transforms=ids_side, dos_transforms=dos_side,
        gaps=gaps, shifted_gaps=shifted_gaps, max_gap=max_gap, tolerance=tol, passed=bool(max_gap <= tol),
    )


def _boundary_deviation(spec, region, padding, t, index):
    padded = spec.build(region.grown(padding), index)
    local = localized_trace(HeatKernel(t), padded, region)
    dirichlet = heat_trace(restrict(padded, region), t)
    return abs(local - dirichlet) / region.site_count


@dataclass
class BoundaryReport:
    t: float
    padding: int
    volumes: list
    deviations: list
    decay_factors: list
    required_factor: float
    passed: bool

    def as_dict(self):
        return {
            't': self.t,
            'padding': self.padding,
            'volumes': self.volumes,
            'deviations': self.deviations,
            'decay_factors': self.decay_factors,
            'required_factor': self.required_factor,
            'passed': self.passed,
        }


def boundary_independence(spec, folner, t, realizations, padding=DEFAULT_BOUNDARY_PADDING, workers=None, factor=None):
    """
    max over seeds of |tr(χ_{A_n} e^{-tH_ω^pad}) - tr(e^{-tH_ω^n})| / |A_n|
    at every scale, where H_ω^pad lives on A_n grown by `padding` sites.
    """
    t = float(t)
    if not t > 0:
        raise DomainError(f"boundary independence needs t > 0, got {t}")
    if factor is None:
        factor = tolerance('boundary_decay_factor', 1.8)
    realizations = int(realizations)
    regions = folner.regions
    tasks = [(spec, region, int(padding), t, k) for region in regions for k in range(realizations)]
    results = run_parallel(_boundary_deviation, tasks, workers)
    deviations = [
        float(max(results[n * realizations:(n + 1) * realizations])) for n in range(len(regions))
    ]
    decay = [
        (a / b if b > 0 else float('inf')) for a, b in zip(deviations, deviations[1:])
    ]
    negligible = max(deviations) <= 1e-12
    passed = negligible or all(f >= factor for f in decay)
    logger.info(f"Boundary independence at t={t}: deviations {deviations}")
    return BoundaryReport(
        t=t, padding=int(padding), volumes=[r.site_count for r in regions], deviations=deviations,
        decay_factors=decay, required_factor=factor, passed=bool(passed),
    )


UNIQUENESS_T_GRID = tuple(float(t) for t in np.linspace(0.1, 5.0, 21))


@dataclass
class UniquenessReport:
    t_grid: list
    agreement_tolerance: float
    tolerance: float
    pairs: list
    passed: bool

    def as_dict(self):
        return {
            't_grid': self.t_grid,
            'agreement_tolerance': self.agreement_tolerance,
            'tolerance': self.tolerance,
            'pairs': self.pairs,
            'passed': self.passed,
        }


def uniqueness_check(curves, lambda_grid, t_grid=UNIQUENESS_T_GRID, agreement=None, tol=None):
    """
    Consecutive curves whose Laplace transforms agree to `agreement` on
    `t_grid` must be within `tol` of each other at the continuity points
    of `lambda_grid`. Pairs whose transforms differ more are reported
    but do not bind.
    """
    if agreement is None:
        agreement = tolerance('laplace_agreement', 1e-4)
    if tol is None:
        tol = tolerance('cdf_distance', 0.01)
    t_grid = [float(t) for t in t_grid]
    if not t_grid or min(t_grid) <= 0:
        raise DomainError(f"the t grid must be nonempty and positive, got {t_grid}")
    pairs = []
    passed = True
    for n, (first, second) in enumerate(zip(curves, curves[1:])):
        gap = laplace_agreement(first, second, t_grid)
        try:
            distance = cdf_distance(first, second, lambda_grid).distance
        except DegenerateGridError:
            distance = None
        binding = gap <= agreement
        ok = not binding or (distance is not None and distance <= tol)
        passed &= ok
        pairs.append({
            'scales': [n, n + 1], 'laplace_gap': gap, 'cdf_distance': distance,
            'binding': bool(binding), 'passed': bool(ok),
        })
    logger.info(f"Uniqueness: {sum(p['binding'] for p in pairs)} of {len(pairs)} scale pairs agree in Laplace")
    return UniquenessReport(
        t_grid=t_grid, agreement_tolerance=agreement, tolerance=tol, pairs=pairs, passed=bool(passed),
    )
