"""Initial data with prescribed low-frequency behaviour and estimation of its decay character.

A datum is described by a radial spectral profile ``a(rho)``: ``a(rho)**2`` is
the spherical average of ``|u0_hat(xi)|**2`` over ``|xi| = rho``. Three families
are built in:

power-law     a(rho) = rho**q on rho <= kappa                r* = q
annulus       a(rho) = 1 on delta <= rho <= kappa            r* = inf
critical-log  a(rho)**2 = rho**-n / log(e/rho)**2, rho <= kappa   r* = -n/2
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.special import gamma

from .errors import DomainError, QuadratureError, ValidationError
from .series import DecayFitResult, fit_power_law
from .spectral import Grid, PhysicsParams, SpectralVectorField, h1alpha_norm_sq

FAMILIES = ("power-law", "annulus", "critical-log")
INDICATOR_RTOL = 1e-10
# fixed direction whose solenoidal projection gives the angular pattern
PATTERN_DIRECTION = np.array([1.0, 2.0, 3.0]) / math.sqrt(14.0)
DEFAULT_WINDOW = (1e-3, 1e-1)
WINDOW_SAMPLES = 32
# rms log-residual above which F(rho) is not treated as a pure power law
PURE_POWER_RESIDUAL = 1e-3
SENTINEL_MARGIN = 0.1
# largest decay character the estimator distinguishes from infinity
R_STAR_CEILING = 20.0


class Sentinel(str, Enum):
    MINUS_N_HALF = "MINUS_N_HALF"
    INFINITY = "INFINITY"


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


@dataclass(frozen=True)
class ContinuumDatum:
    family: str
    n: int = 3
    q: float = 0.0
    kappa: float = 1.0
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown datum family {self.family!r}; choose from {FAMILIES}")
        if not self.kappa > 0:
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if self.family == "power-law" and not self.q > -self.n / 2:
            raise ValidationError(f"power-law exponent q={self.q} must exceed -n/2 (datum not in L2)")
        if self.family == "annulus" and not 0 < self.delta < self.kappa:
            raise ValidationError(f"annulus needs 0 < delta < kappa, got delta={self.delta}, kappa={self.kappa}")
        if self.family == "critical-log" and not self.kappa < math.e:
            raise ValidationError(f"critical-log profile needs kappa < e, got {self.kappa}")

    @property
    def support(self) -> tuple[float, float]:
        lo = self.delta if self.family == "annulus" else 0.0
        return lo, self.kappa

    @property
    def analytic_r_star(self) -> float:
        if self.family == "power-law":
            return float(self.q)
        if self.family == "annulus":
            return math.inf
        return -self.n / 2

    def profile_sq(self, rho):
        """a(rho)**2, vectorised; zero outside the support."""
        rho = np.asarray(rho, dtype=float)
        inside = rho > 0
        logs = self.log_profile_sq(np.log(np.where(inside, rho, 1.0)))
        return np.where(inside, np.exp(logs), 0.0)

    def log_profile_sq(self, v):
        """log(a(e**v)**2), -inf outside the support; safe for very negative v."""
        v = np.asarray(v, dtype=float)
        lo, hi = self.support
        inside = v <= math.log(hi)
        if lo > 0:
            inside &= v >= math.log(lo)
        if self.family == "power-law":
            val = 2 * self.q * v
        elif self.family == "annulus":
            val = np.zeros_like(v)
        else:
            val = -self.n * v - 2 * np.log1p(-np.where(inside, v, 0.0))
        return np.where(inside, val, -np.inf)

    def to_dict(self) -> dict:
        d = asdict(self)
        r = self.analytic_r_star
        d["r_star"] = "inf" if math.isinf(r) else r
        return d


def make_datum(family: str, n: int = 3, **params) -> ContinuumDatum:
    """Build a datum of the given family; unknown parameters are rejected."""
    allowed = {"q", "kappa", "delta", "seed"}
    extra = set(params) - allowed
    if extra:
        raise ValidationError(f"unknown datum parameters: {sorted(extra)}")
    if family == "annulus" and "kappa" not in params and "delta" in params:
        params["kappa"] = 2.0 * params["delta"]
    return ContinuumDatum(family=family, n=n, **params)


def write_datum_file(path, datum: ContinuumDatum) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(datum.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_datum_file(path) -> ContinuumDatum:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a datum description ({exc})") from exc
    if not isinstance(raw, dict) or "family" not in raw:
        raise ValidationError(f"{path}: datum description must be an object with a 'family' key")
    raw.pop("r_star", None)
    fields = {k: raw[k] for k in ("family", "n", "q", "kappa", "delta", "seed") if k in raw}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ValidationError(f"{path}: unknown datum keys {sorted(unknown)}")
    return ContinuumDatum(**fields)


def sample_on_grid(
    datum: ContinuumDatum,
    grid: Grid,
    h1alpha: float | None = None,
    params: PhysicsParams | None = None,
) -> SpectralVectorField:
    """Grid sample ``c_k = sqrt(3/2) a(|k|) P(k) e / L**3`` with a fixed direction ``e``.

    ``P(k)`` is the solenoidal projector, whose angular mean of ``|P e|**2`` is
    2/3; the ``sqrt(3/2)`` factor makes the spherical mean of ``|u0_hat|**2``
    equal ``a**2``. With ``h1alpha`` set, the field is rescaled to that norm.
    """
    if datum.n != grid.n:
        raise ValidationError(f"datum dimension {datum.n} does not match grid dimension {grid.n}")
    k, k2 = grid.k, grid.k2
    amp = np.sqrt(datum.profile_sq(grid.k_mag))
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    ke = np.einsum("i...,i->...", k, PATTERN_DIRECTION)
    pattern = PATTERN_DIRECTION[:, None, None, None] - k * (ke * inv)
    c = math.sqrt(1.5) * amp * pattern / grid.box_length**3
    c[:, 0, 0, 0] = 0.0
    f = SpectralVectorField(grid, c.astype(np.complex128))
    if h1alpha is not None:
        norm = h1alpha_norm_sq(f, params or PhysicsParams()).h1alpha_sq
        if norm == 0:
            raise ValidationError("datum has no modes on this grid; cannot normalise")
        f = f.scaled(h1alpha / math.sqrt(norm))
    return f


def radial_quad(log_integrand, lo: float, hi: float, rtol: float = INDICATOR_RTOL, scale: float | None = None) -> float:
    """Adaptive quadrature over ``rho`` in ``[lo, hi]`` using the variable ``v = log rho``.

    ``log_integrand(v)`` returns the log of ``f(rho) * rho`` so that singular
    and rapidly decaying integrands stay representable. ``lo`` may be 0.
    ``scale`` marks a radius where the integrand concentrates and adds
    breakpoints around it.
    """
    if hi <= lo:
        return 0.0
    vhi = math.log(hi)

    def g(v):
        return math.exp(float(log_integrand(v)))

    vlo = math.log(lo) if lo > 0 else vhi - 12.0
    points = []
    if scale is not None and 0 < scale < hi:
        vs = math.log(scale)
        if lo == 0:
            vlo = min(vlo, vs - 8.0)
        points = [v for v in (vs - 4.0, vs, vs + 2.0) if vlo < v < vhi]
    edges = [vlo] + sorted(points) + [vhi]
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            val, e = integrate.quad(g, a, b, epsabs=0.0, epsrel=rtol * 0.1, limit=400)
            total += val
            err += e
        if lo == 0:
            val, e = integrate.quad(g, -np.inf, vlo, epsabs=rtol * 0.1 * abs(total), epsrel=rtol * 0.1, limit=400)
            total += val
            err += e
    if not np.isfinite(total) or (err > rtol * abs(total) and err > 1e-300):
        achieved = err / abs(total) if total else math.inf
        raise QuadratureError(f"radial quadrature reached relative error {achieved:.2e}, target {rtol:.0e}", achieved)
    return total


def spectral_mass(datum: ContinuumDatum, rho: float, s: float = 0.0, rtol: float = INDICATOR_RTOL) -> float:
    """F_s(rho) = integral over the ball B(rho) of |xi|**(2s) a(|xi|)**2."""
    lo, hi = datum.support
    top = min(rho, hi)
    if top <= lo:
        return 0.0
    n = datum.n
    val = radial_quad(lambda v: (2 * s + n) * v + datum.log_profile_sq(v), lo, top, rtol)
    return sphere_area(n) * val


def decay_indicator(datum: ContinuumDatum, r: float, s: float, rho: float) -> float:
    """Finite-radius approximant rho**(-2r-n) F_s(rho) of the s-decay indicator."""
    n = datum.n
    if not 0 < rho <= datum.kappa:
        raise DomainError(f"rho must lie in (0, kappa={datum.kappa}], got {rho}")
    if not r > -n / 2 + s:
        raise DomainError(f"r must exceed -n/2 + s = {-n / 2 + s}, got {r}")
    return rho ** (-2 * r - n) * spectral_mass(datum, rho, s)


def shift_character(r_star: float, s: float, n: int = 3) -> float:
    """Decay character of Lambda^s u0 from that of u0."""
    if r_star < -n / 2:
        raise DomainError(f"decay character must be at least -n/2 = {-n / 2}, got {r_star}")
    return r_star + s


@dataclass(frozen=True)
class DecayCharacterEstimate:
    r_star: float
    r_star_s: float
    s: float
    sentinel: Sentinel | None
    slope_fit: DecayFitResult | None
    rho_window: tuple[float, float]
    limit_slope: float | None = None
    warning: str | None = None

    def to_dict(self) -> dict:
        def num(x):
            return "inf" if x is not None and math.isinf(x) else x

        return {
            "r_star": num(self.r_star),
            "r_star_s": num(self.r_star_s),
            "s": self.s,
            "sentinel": self.sentinel.value if self.sentinel else None,
            "limit_slope": self.limit_slope,
            "rho_window": list(self.rho_window),
            "slope_fit": self.slope_fit.to_dict() if self.slope_fit else None,
            "warning": self.warning,
        }


def _log_corrected_limit(rho: np.ndarray, mass: np.ndarray) -> float | None:
    """Extrapolate the local slope dlogF/dlogrho to rho -> 0.

    Local slopes are fitted by a quadratic in ``x = 1/log(e/rho)`` and evaluated
    at ``x = 0``; logarithmic corrections to a power law are polynomial in ``x``.
    """
    if rho[-1] >= 1.0:
        return None
    lr, lf = np.log(rho), np.log(mass)
    local = np.gradient(lf, lr, edge_order=2)
    x = 1.0 / np.log(math.e / rho)
    coef = np.polyfit(x, local, 2)
    return float(coef[-1])


def estimate_decay_character(
    datum: ContinuumDatum,
    s: float = 0.0,
    window: tuple[float, float] | None = None,
    samples: int = WINDOW_SAMPLES,
) -> DecayCharacterEstimate:
    """Estimate r* from the growth slope ``p`` of ``log F_s`` against ``log rho``.

    ``r*_s = (p - n)/2`` and ``r* = r*_s - s``. A profile that vanishes at the
    bottom of the window is classified ``INFINITY``; a slope within
    ``SENTINEL_MARGIN`` of the lower admissible value ``2s`` is classified
    ``MINUS_N_HALF``. When the log-log fit is not a pure power law the slope is
    replaced by its log-corrected limit and a warning is attached.
    """
    n = datum.n
    w = window or (DEFAULT_WINDOW[0] * datum.kappa, DEFAULT_WINDOW[1] * datum.kappa)
    rho = np.geomspace(w[0], w[1], samples)
    mass = np.array([spectral_mass(datum, r, s) for r in rho])

    def sentinel_inf(fit=None, limit=None, note=None):
        return DecayCharacterEstimate(math.inf, math.inf, s, Sentinel.INFINITY, fit, w, limit, note)

    if mass[0] <= 0:
        return sentinel_inf(note="indicator vanishes near the origin")
    fit = fit_power_law(rho, mass)
    slope, limit, note = fit.exponent, None, None
    if fit.residual > PURE_POWER_RESIDUAL:
        note = f"not a pure power law (rms log residual {fit.residual:.2e})"
        limit = _log_corrected_limit(rho, mass)
        if limit is not None:
            slope = limit
    if slope <= 2 * s + SENTINEL_MARGIN:
        return DecayCharacterEstimate(-n / 2, -n / 2 + s, s, Sentinel.MINUS_N_HALF, fit, w, limit, note)
    if slope >= 2 * (R_STAR_CEILING + s) + n - SENTINEL_MARGIN:
        return sentinel_inf(fit, limit, note)
    r_s = (slope - n) / 2
    return DecayCharacterEstimate(r_s - s, r_s, s, None, fit, w, limit, note)
