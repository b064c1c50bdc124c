# operators/functions.py
"""
The closed vocabulary of spectral functions F that experiments may apply
to an operator, F(H) = Σ F(λ_k) P_k. Each function is vectorized over
eigenvalue arrays and round-trips through a JSON-able dict.
"""

from dataclasses import dataclass

import numpy as np

from core.exceptions import DomainError


@dataclass(frozen=True)
class Indicator:
    """χ_{]-∞, upper[}; the strict inequality matches the counting convention."""

    upper: float

    kind = 'indicator'

    def __call__(self, values):
        return (np.asarray(values, dtype=np.float64) < self.upper).astype(np.float64)

    def to_dict(self):
        return {'kind': self.kind, 'upper': float(self.upper)}


@dataclass(frozen=True)
class HeatKernel:
    """λ ↦ exp(-tλ)."""

    t: float

    kind = 'heat'

    def __post_init__(self):
        if not self.t >= 0.0:
            raise DomainError(f"heat kernel time must be ≥ 0, got {self.t}")

    def __call__(self, values):
        return np.exp(-self.t * np.asarray(values, dtype=np.float64))

    def to_dict(self):
        return {'kind': self.kind, 't': float(self.t)}


@dataclass(frozen=True)
class Polynomial:
    """Σ c_k λ^k with coefficients in increasing degree."""

    coefficients: tuple

    kind = 'polynomial'

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients)
        if not coefficients:
            raise DomainError("a polynomial needs at least one coefficient")
        object.__setattr__(self, 'coefficients', coefficients)

    def __call__(self, values):
        return np.polynomial.polynomial.polyval(np.asarray(values, dtype=np.float64), self.coefficients)

    def to_dict(self):
        return {'kind': self.kind, 'coefficients': list(self.coefficients)}


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through (knots, values), zero outside [knots[0], knots[-1]]."""

    knots: tuple
    values: tuple

    kind = 'piecewise-linear'

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        values = tuple(float(v) for v in self.values)
        if len(knots) < 2 or len(knots) != len(values):
            raise DomainError("piecewise-linear functions need matching knots and values, at least 2")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise DomainError(f"knots must be strictly increasing, got {knots}")
        object.__setattr__(self, 'knots', knots)
        object.__setattr__(self, 'values', values)

    def __call__(self, values):
        return np.interp(np.asarray(values, dtype=np.float64), self.knots, self.values, left=0.0, right=0.0)

    def to_dict(self):
        return {'kind': self.kind, 'knots': list(self.knots), 'values': list(self.values)}


SPECTRAL_FUNCTIONS = {cls.kind: cls for cls in (Indicator, HeatKernel, Polynomial, PiecewiseLinear)}


def spectral_function(record):
    """Rebuild a spectral function from its `to_dict` record."""
    record = dict(record)
    kind = record.pop('kind', None)
    try:
        cls = SPECTRAL_FUNCTIONS[kind]
    except KeyError:
        raise DomainError(f"unknown spectral function {kind!r}; expected one of {sorted(SPECTRAL_FUNCTIONS)}")
    return cls(**record)
