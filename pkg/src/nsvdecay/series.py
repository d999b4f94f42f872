"""Norm time series, CSV persistence and algebraic decay fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError, ValidationError

CSV_HEADER = ("t", "l2_sq", "h1dot_sq", "h1alpha_sq")
MIN_FIT_SAMPLES = 8
# rms log-residual above which a series is not treated as algebraic
ALGEBRAIC_RESIDUAL = 0.05


@dataclass(frozen=True, eq=False)
class NormSeries:
    times: np.ndarray
    l2_sq: np.ndarray
    h1dot_sq: np.ndarray
    h1alpha_sq: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, f), dtype=float) for f in CSV_HEADER[1:]]
        t = np.asarray(self.times, dtype=float)
        if any(a.shape != t.shape for a in arrays) or t.ndim != 1:
            raise ValidationError("norm series columns must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("series times must be strictly increasing")
        object.__setattr__(self, "times", t)
        for name, a in zip(CSV_HEADER[1:], arrays):
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.times.size

    def column(self, name: str) -> np.ndarray:
        if name not in CSV_HEADER:
            raise ValidationError(f"unknown series column {name!r}")
        return getattr(self, name)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in zip(self.times, self.l2_sq, self.h1dot_sq, self.h1alpha_sq):
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "NormSeries":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise ValidationError(f"{path}: expected header {','.join(CSV_HEADER)}")
            rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        rows = rows.reshape(-1, 4)
        return cls(*rows.T)


@dataclass(frozen=True)
class DecayFitResult:
    """Least-squares fit of ``value ~ amplitude * (offset + t)**(-exponent)``.

    For fits over a frequency radius the same container is reused with
    ``offset = 0`` and ``exponent`` holding the growth slope in log-log space.
    """

    exponent: float
    amplitude: float
    offset: float
    window: tuple[float, float]
    residual: float
    n_samples: int

    @property
    def algebraic(self) -> bool:
        return self.residual <= ALGEBRAIC_RESIDUAL

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["algebraic"] = self.algebraic
        return d


def _window_mask(t: np.ndarray, window) -> np.ndarray:
    t0, t1 = window
    # relative slack so that window edges computed in floating point still match
    return (t >= t0 * (1 - 1e-12)) & (t <= t1 * (1 + 1e-12))


def fit_decay_exponent(series: NormSeries, window=None, column: str = "h1alpha_sq") -> DecayFitResult:
    """Fit ``A (B + t)**(-p)`` to one column of ``series`` over ``window``.

    The offset ``B`` is constrained to ``[0, t0]`` where ``t0`` is the window
    start; larger offsets would let the family mimic an exponential. For fixed
    ``B`` the problem is linear in ``(log A, p)``, so ``B`` is found by a
    bounded one-dimensional search on the profiled residual.
    """
    t = series.times
    y = series.column(column)
    if window is None:
        window = (float(t[0]), float(t[-1]))
    mask = _window_mask(t, window)
    t, y = t[mask], y[mask]
    if t.size < MIN_FIT_SAMPLES:
        raise ValidationError(f"need at least {MIN_FIT_SAMPLES} samples in window {window}, got {t.size}")
    if np.any(y <= 0) or np.any(t <= 0):
        raise DomainError("decay fits require positive times and values")
    logy = np.log(y)
    b_max = float(t[0])

    def solve(b):
        x = np.log(b + t)
        design = np.column_stack([np.ones_like(x), -x])
        coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
        resid = logy - design @ coef
        return coef, float(np.sqrt(np.mean(resid**2)))

    if b_max > 0:
        grid = np.concatenate([[0.0], np.geomspace(b_max * 1e-6, b_max, 61)])
        costs = [solve(b)[1] for b in grid]
        i = int(np.argmin(costs))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        res = optimize.minimize_scalar(
            lambda b: solve(b)[1], bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-10 * max(b_max, 1.0), "maxiter": 500},
        )
        b = float(res.x) if res.fun <= costs[i] else float(grid[i])
    else:
        b = 0.0
    (log_a, p), rms = solve(b)
    return DecayFitResult(float(p), float(math.exp(log_a)), b, (float(t[0]), float(t[-1])), rms, int(t.size))


def fit_power_law(x: np.ndarray, y: np.ndarray) -> DecayFitResult:
    """Straight-line fit of log y against log x (growth slope, zero offset)."""
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    rms = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return DecayFitResult(float(slope), float(math.exp(intercept)), 0.0, (float(x[0]), float(x[-1])), rms, int(x.size))


def per_decade_slopes(series: NormSeries, decades, column: str = "h1alpha_sq") -> np.ndarray:
    """Decay slope -dlog(value)/dlog(t) between consecutive decade marks.

    ``decades`` lists the marks (e.g. ``[10, 100, 1000, 10000]``); values at the
    marks are interpolated linearly in log-log coordinates.
    """
    t = series.times
    y = series.column(column)
    if np.any(y <= 0):
        raise DomainError("slope diagnostics require positive values")
    marks = np.asarray(decades, dtype=float)
    if marks[0] < t[0] * (1 - 1e-12) or marks[-1] > t[-1] * (1 + 1e-12):
        raise ValidationError("decade marks fall outside the sampled range")
    logy = np.interp(np.log(marks), np.log(t), np.log(y))
    return -np.diff(logy) / np.diff(np.log(marks))


def log_times(t0: float, t1: float, per_decade: int = 64) -> np.ndarray:
    """Log-spaced sample times from t0 to t1 inclusive, ``per_decade`` per decade."""
    n = int(round(per_decade * math.log10(t1 / t0))) + 1
    return np.geomspace(t0, t1, max(n, 2))
