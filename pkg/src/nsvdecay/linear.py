"""Exact evolution of the linear Voigt system and its decay-rate classification."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .decay_character import ContinuumDatum, radial_quad, sphere_area
from .errors import DomainError, ValidationError
from .series import NormSeries, per_decade_slopes
from .spectral import (
    NormTriple,
    PhysicsParams,
    SpectralVectorField,
    h1alpha_norm_sq,
    voigt_multiplier,
)

SERIES_RTOL = 1e-8
SENTINEL_DECADES = (10.0, 100.0, 1000.0, 10000.0)
# required growth of the per-decade slope for super-algebraic decay
FASTER_SLOPE_GAIN = 1.0


class RateClass(str, Enum):
    SLOWER_THAN_ALGEBRAIC = "SLOWER_THAN_ALGEBRAIC"
    FASTER_THAN_ALGEBRAIC = "FASTER_THAN_ALGEBRAIC"


@dataclass(frozen=True)
class EvolvedDatum:
    """A continuum datum carried forward to time ``t`` by the Voigt multiplier."""

    datum: ContinuumDatum
    params: PhysicsParams
    t: float

    def log_profile_sq(self, v):
        rho2 = np.exp(2 * np.asarray(v, dtype=float))
        rate = self.params.nu * rho2 / (1.0 + self.params.alpha**2 * rho2)
        return self.datum.log_profile_sq(v) - 2 * rate * self.t


def evolve_linear(obj, t: float, params: PhysicsParams):
    """Advance a datum or grid field by time ``t`` under the linear Voigt flow.

    Continuum data return an :class:`EvolvedDatum` (the multiplier is applied
    inside later quadratures); grid fields are multiplied mode by mode.
    """
    if t < 0:
        raise DomainError(f"t must be nonnegative (backward evolution is not supported), got {t}")
    if isinstance(obj, SpectralVectorField):
        mult = voigt_multiplier(obj.grid.k_mag, params, t)
        return obj.with_coefficients(obj.coefficients * mult)
    if isinstance(obj, EvolvedDatum):
        if obj.params != params:
            raise ValidationError("cannot compose evolutions with different physical parameters")
        return EvolvedDatum(obj.datum, params, obj.t + t)
    if isinstance(obj, ContinuumDatum):
        return EvolvedDatum(obj, params, float(t))
    raise ValidationError(f"cannot evolve object of type {type(obj).__name__}")


def continuum_norm_sq(obj, params: PhysicsParams, rtol: float = SERIES_RTOL) -> NormTriple:
    """Frequency-space norms of a (possibly evolved) continuum datum by radial quadrature."""
    if isinstance(obj, ContinuumDatum):
        obj = EvolvedDatum(obj, params, 0.0)
    datum = obj.datum
    n = datum.n
    lo, hi = datum.support
    # integrand concentrates near the heat-kernel width once 2 nu t kappa^2 >> 1
    scale = 1.0 / math.sqrt(2 * params.nu * obj.t) if obj.t > 0 else None
    area = sphere_area(n)
    l2 = area * radial_quad(lambda v: n * v + obj.log_profile_sq(v), lo, hi, rtol, scale)
    h1dot = area * radial_quad(lambda v: (n + 2) * v + obj.log_profile_sq(v), lo, hi, rtol, scale)
    return NormTriple(l2, h1dot, l2 + params.alpha**2 * h1dot)


def linear_norm_series(datum: ContinuumDatum, times, params: PhysicsParams) -> NormSeries:
    """Sampled H^1_alpha decay of the linear solution from a continuum datum."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise DomainError("sample times must be nonnegative")
    rows = [continuum_norm_sq(evolve_linear(datum, t, params), params) for t in times]
    return NormSeries(times, *np.array(rows, dtype=float).reshape(-1, 3).T)


def grid_linear_norm_series(field: SpectralVectorField, times, params: PhysicsParams) -> NormSeries:
    """Exact lattice-sum counterpart of :func:`linear_norm_series` for a grid field."""
    g = field.grid
    energy = np.sum(np.abs(field.coefficients) ** 2, axis=0)
    k2 = g.k2
    vol = g.box_length**3
    # modes sharing |k| share the multiplier; collapse to distinct shells
    shells, inverse = np.unique(k2.ravel(), return_inverse=True)
    e_shell = np.bincount(inverse, weights=energy.ravel())
    rows = []
    for t in np.asarray(times, dtype=float):
        m2 = voigt_multiplier(np.sqrt(shells), params, t) ** 2
        l2 = float(np.sum(m2 * e_shell) * vol)
        h1 = float(np.sum(shells * m2 * e_shell) * vol)
        rows.append((l2, h1, l2 + params.alpha**2 * h1))
    return NormSeries(np.asarray(times, dtype=float), *np.array(rows).reshape(-1, 3).T)


def predicted_linear_exponent(r_star: float, n: int = 3):
    """Decay exponent of ||v(t)||^2_{H^1_alpha} for the linear flow, or a rate class."""
    if r_star < -n / 2:
        raise DomainError(f"decay character must be at least -n/2 = {-n / 2}, got {r_star}")
    if math.isinf(r_star):
        return RateClass.FASTER_THAN_ALGEBRAIC
    if r_star == -n / 2:
        return RateClass.SLOWER_THAN_ALGEBRAIC
    return n / 2 + r_star


def classify_rate(series: NormSeries, decades=SENTINEL_DECADES, column: str = "h1alpha_sq"):
    """Classify super- or sub-algebraic decay from the drift of per-decade slopes.

    Returns ``(rate_class_or_None, slopes)``. Faster-than-algebraic decay needs
    the slope to grow by at least ``FASTER_SLOPE_GAIN`` across the marks;
    slower-than-algebraic decay needs positive slopes that strictly decrease.
    """
    slopes = per_decade_slopes(series, decades, column)
    d = np.diff(slopes)
    if slopes[-1] - slopes[0] >= FASTER_SLOPE_GAIN and np.all(d > 0):
        return RateClass.FASTER_THAN_ALGEBRAIC, slopes
    if np.all(slopes > 0) and np.all(d < 0):
        return RateClass.SLOWER_THAN_ALGEBRAIC, slopes
    return None, slopes


def norms_of(field: SpectralVectorField, params: PhysicsParams) -> NormTriple:
    return h1alpha_norm_sq(field, params)
