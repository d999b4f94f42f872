"""Pseudo-spectral RK4 integrator for the Navier-Stokes-Voigt system on a periodic box.

Per mode the evolution equation reads

    d/dt u_hat = -nu k^2/(1 + alpha^2 k^2) u_hat - (1 + alpha^2 k^2)^-1 flux_hat,

where ``flux_hat`` is the dealiased, Leray-projected transform of div(u (x) u).
The time loop works on the non-redundant half spectrum of the real field;
fields crossing the public API are full Hermitian arrays.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from .decay_character import ContinuumDatum, sample_on_grid
from .errors import InstabilityError, ValidationError
from .series import NormSeries, log_times
from .spectral import (
    Grid,
    NonlinearFluxSpectrum,
    PhysicsParams,
    SpectralVectorField,
    damping_rate,
    h1alpha_norm_sq,
    helmholtz_inverse_factor,
    max_divergence,
    project_coefficients,
    voigt_multiplier,
)

log = logging.getLogger(__name__)

DIVERGENCE_TOL = 1e-10
_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def max_trustworthy_time(grid: Grid) -> float:
    """Time after which a k ~ t**-1/2 frequency ball lies inside the first grid shell."""
    return (grid.box_length / (2 * math.pi)) ** 2


@dataclass(frozen=True, eq=False)
class SolverConfig:
    grid: Grid
    params: PhysicsParams
    dt: float
    t_end: float
    sample_times: np.ndarray = field(default_factory=lambda: np.array([]))
    snapshot_times: np.ndarray = field(default_factory=lambda: np.array([]))
    nonlinear: bool = True
    datum: ContinuumDatum | None = None
    h1alpha: float | None = 0.1
    cfl_safety: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValidationError(f"t_end must be nonnegative, got {self.t_end}")
        for name in ("sample_times", "snapshot_times"):
            t = np.unique(np.asarray(getattr(self, name), dtype=float))
            if t.size and (t[0] < 0 or t[-1] > self.t_end * (1 + 1e-12)):
                raise ValidationError(f"{name} must lie in [0, t_end]")
            object.__setattr__(self, name, t)

    def snapped(self, times) -> np.ndarray:
        """Round requested output times to the step lattice ``m * dt``."""
        m = np.unique(np.rint(np.asarray(times, dtype=float) / self.dt).astype(np.int64))
        return m[m * self.dt <= self.t_end * (1 + 1e-12)] * self.dt

    def summary(self) -> dict:
        return {
            "grid": {"n_points": self.grid.n_points, "box_length": self.grid.box_length},
            "physics": {"alpha": self.params.alpha, "nu": self.params.nu},
            "time": {"dt": self.dt, "t_end": self.t_end},
            "nonlinearity": self.nonlinear,
            "datum": self.datum.to_dict() if self.datum else None,
            "h1alpha": self.h1alpha,
            "snapshots": {"times": [float(t) for t in self.snapshot_times]},
        }


def desk_config(
    datum: ContinuumDatum,
    nonlinear: bool = True,
    n_points: int = 64,
    box_length: float = 128 * math.pi,
    params: PhysicsParams | None = None,
    dt: float = 8.0,
    t_end: float | None = None,
    h1alpha: float = 0.1,
    snapshot_window: tuple[float, float] = (512.0, None),
    n_snapshots: int = 24,
) -> SolverConfig:
    """Default desk-scale configuration, run up to the trustworthy time."""
    grid = Grid(n_points, box_length)
    t_end = t_end or max_trustworthy_time(grid)
    lo, hi = snapshot_window
    hi = min(hi or t_end, t_end)
    snaps = np.concatenate([[0.0], np.geomspace(min(lo, hi), hi, n_snapshots)])
    return SolverConfig(
        grid=grid,
        params=params or PhysicsParams(0.1, 0.05),
        dt=dt,
        t_end=t_end,
        sample_times=np.concatenate([[0.0], log_times(dt, t_end, 64)]),
        snapshot_times=snaps,
        nonlinear=nonlinear,
        datum=datum,
        h1alpha=h1alpha,
    )


# --- half-spectrum machinery ---------------------------------------------------


class _Operators:
    """Precomputed half-spectrum arrays for one grid and parameter set."""

    def __init__(self, grid: Grid, params: PhysicsParams):
        N = grid.n_points
        nh = N // 2 + 1
        self.grid, self.params, self.nh = grid, params, nh
        self.k = np.ascontiguousarray(grid.k[..., :nh])
        self.k2 = np.ascontiguousarray(grid.k2[..., :nh])
        kmag = np.sqrt(self.k2)
        self.damp = damping_rate(kmag, params)
        self.inv_helm = helmholtz_inverse_factor(kmag, params)
        self.mask = np.ascontiguousarray(grid.dealias_mask[..., :nh])
        w = np.full(nh, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        self.weight = np.broadcast_to(w, self.k2.shape)
        self.neg = (-np.arange(N)) % N

    def half(self, f: SpectralVectorField) -> np.ndarray:
        return np.array(f.coefficients[..., : self.nh])

    def full(self, ch: np.ndarray) -> np.ndarray:
        N, nh = self.grid.n_points, self.nh
        out = np.empty(ch.shape[:-1] + (N,), dtype=np.complex128)
        out[..., :nh] = ch
        tail = np.conj(ch[..., 1 : nh - 1][..., ::-1])
        out[..., nh:] = tail[..., self.neg, :][..., self.neg, :, :]
        return out

    def symmetrize_planes(self, ch: np.ndarray) -> np.ndarray:
        """Enforce Hermitian symmetry inside the self-conjugate kz planes."""
        neg = self.neg
        for iz in (0, self.nh - 1):
            p = ch[..., iz]
            ch[..., iz] = 0.5 * (p + np.conj(p[..., neg, :][..., neg]))
        return ch

    def norms(self, ch: np.ndarray) -> tuple[float, float, float]:
        e = np.sum(ch.real**2 + ch.imag**2, axis=0) * self.weight
        vol = self.grid.box_length**3
        l2 = float(np.sum(e) * vol)
        h1 = float(np.sum(self.k2 * e) * vol)
        return l2, h1, l2 + self.params.alpha**2 * h1

    def physical(self, ch: np.ndarray) -> np.ndarray:
        N = self.grid.n_points
        return sfft.irfftn(ch, s=self.grid.shape, axes=(1, 2, 3)) * N**3

    def flux(self, ch: np.ndarray):
        """Projected, dealiased flux on the half spectrum and max |u| in physical space."""
        N = self.grid.n_points
        u = self.physical(ch)
        umax = float(np.sqrt(np.max(np.sum(u * u, axis=0))))
        prod = np.empty((6,) + self.grid.shape)
        for n, (i, j) in enumerate(_PAIRS):
            np.multiply(u[i], u[j], out=prod[n])
        t = sfft.rfftn(prod, axes=(1, 2, 3)) / N**3
        tij = {p: t[n] for n, p in enumerate(_PAIRS)}
        k = self.k
        out = np.empty_like(ch)
        for i in range(3):
            acc = sum(k[j] * tij[(min(i, j), max(i, j))] for j in range(3))
            out[i] = 1j * acc
        out *= self.mask
        out = project_coefficients(out, k, self.k2)
        return self.symmetrize_planes(out), umax

    def rhs(self, ch: np.ndarray, nonlinear: bool):
        lin = -self.damp * ch
        if not nonlinear:
            return lin, None
        fl, umax = self.flux(ch)
        return lin - self.inv_helm * fl, umax


def _rk4(ops: _Operators, ch: np.ndarray, dt: float, nonlinear: bool):
    k1, umax = ops.rhs(ch, nonlinear)
    k2, _ = ops.rhs(ch + 0.5 * dt * k1, nonlinear)
    k3, _ = ops.rhs(ch + 0.5 * dt * k2, nonlinear)
    k4, _ = ops.rhs(ch + dt * k3, nonlinear)
    return ch + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), umax


# --- public operations ---------------------------------------------------------


def nonlinear_flux(u: SpectralVectorField) -> NonlinearFluxSpectrum:
    """Fourier transform of div(u (x) u) with the pressure gradient projected out."""
    div = max_divergence(u)
    if div > DIVERGENCE_TOL:
        raise ValidationError(f"input is not divergence-free (max |k.u|/|u| = {div:.2e})")
    ops = _Operators(u.grid, PhysicsParams())
    fl, _ = ops.flux(ops.half(u))
    return NonlinearFluxSpectrum(u.grid, ops.full(fl))


def rk4_step(u: SpectralVectorField, dt: float, config: SolverConfig) -> SpectralVectorField:
    """One classical fourth-order Runge-Kutta step of the Voigt system."""
    if dt < 0:
        raise ValidationError(f"dt must be nonnegative, got {dt}")
    if dt == 0:
        return u
    ops = _Operators(u.grid, config.params)
    ch, _ = _rk4(ops, ops.half(u), dt, config.nonlinear)
    if not np.all(np.isfinite(ch)):
        raise InstabilityError("non-finite state after RK4 step", last_state=u, last_time=None)
    return SpectralVectorField(u.grid, ops.full(ch))


class LemmaCheck(NamedTuple):
    passed: bool
    c_fit: float
    c_required: float
    max_violation_ratio: float
    n_checked: int


@dataclass(eq=False)
class TrajectoryRecord:
    """Output of :func:`run_simulation`.

    ``series`` holds norms at the requested sample times; ``steps`` holds them
    after every time step and feeds the energy balance and the running time
    integral of the L2 norm.
    """

    config: SolverConfig
    initial: SpectralVectorField
    series: NormSeries
    steps: NormSeries
    step_cumulative_l2: np.ndarray
    divergence: np.ndarray
    snapshots: dict[float, SpectralVectorField]
    dt_final: float
    warnings: list[str] = field(default_factory=list)

    @property
    def sample_indices(self) -> np.ndarray:
        return np.searchsorted(self.steps.times, self.series.times)

    @property
    def cumulative_l2(self) -> np.ndarray:
        return self.step_cumulative_l2[self.sample_indices]

    @property
    def energy_residual(self) -> np.ndarray:
        return energy_balance_residual(self)

    def cumulative_l2_at(self, t: float) -> float:
        return float(np.interp(t, self.steps.times, self.step_cumulative_l2))


def initial_field(config: SolverConfig) -> SpectralVectorField:
    if config.datum is None:
        raise ValidationError("solver configuration has no datum")
    return sample_on_grid(config.datum, config.grid, config.h1alpha, config.params)


def run_simulation(config: SolverConfig, u0: SpectralVectorField | None = None) -> TrajectoryRecord:
    """Integrate from ``u0`` (or the sampled datum) to ``config.t_end``.

    Output times are snapped to multiples of ``config.dt``. A step violating the
    advective CFL bound halves ``dt`` for the rest of the run and logs a warning.
    """
    if u0 is None:
        u0 = initial_field(config)
    if config.datum is not None and not config.params.within_hypotheses:
        log.warning("nu <= alpha^2: run is outside the nu > alpha^2 regime")
    ops = _Operators(u0.grid, config.params)
    sample_t = config.snapped(np.concatenate([[0.0], config.sample_times, [config.t_end]]))
    snap_t = config.snapped(config.snapshot_times)
    sample_set = {round(t / config.dt) for t in sample_t}
    snap_set = {round(t / config.dt) for t in snap_t}
    last = int(round(config.t_end / config.dt))

    ch = ops.half(u0)
    dt = config.dt
    # time is tracked in units of the smallest step used so far to avoid drift
    sub, ticks = 1, 0
    times, rows, samples, divergence = [0.0], [ops.norms(ch)], [], []
    snapshots, notes = {}, []

    def record(tick_units):
        m = tick_units
        if m in sample_set:
            f = SpectralVectorField(u0.grid, ops.full(ch))
            samples.append((m * config.dt, *rows[-1]))
            divergence.append(max_divergence(f))
            if m in snap_set:
                snapshots[m * config.dt] = f
        elif m in snap_set:
            snapshots[m * config.dt] = SpectralVectorField(u0.grid, ops.full(ch))

    record(0)
    while ticks < last * sub:
        new, umax = _rk4(ops, ch, dt, config.nonlinear)
        if umax is not None and umax > 0 and dt > config.cfl_safety * u0.grid.dx / umax:
            dt *= 0.5
            sub *= 2
            ticks *= 2
            msg = f"CFL violated at t={times[-1]:.6g}; halving dt to {dt:.6g}"
            log.warning(msg)
            notes.append(msg)
            continue
        norms = ops.norms(new)
        if not all(math.isfinite(v) for v in norms):
            raise InstabilityError(
                f"non-finite state at t={times[-1] + dt:.6g}",
                last_state=SpectralVectorField(u0.grid, ops.full(ch)),
                last_time=times[-1],
            )
        ch = new
        ticks += 1
        times.append(ticks * config.dt / sub)
        rows.append(norms)
        if ticks % sub == 0:
            record(ticks // sub)

    steps = NormSeries(np.array(times), *np.array(rows).T)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(steps.times) * (steps.l2_sq[1:] + steps.l2_sq[:-1]))])
    smp = np.array(samples).reshape(-1, 4)
    return TrajectoryRecord(
        config=config,
        initial=u0,
        series=NormSeries(*smp.T),
        steps=steps,
        step_cumulative_l2=cumulative,
        divergence=np.array(divergence),
        snapshots=snapshots,
        dt_final=dt,
        warnings=notes,
    )


def _fd_derivative(t: np.ndarray, y: np.ndarray, width: int = 5) -> np.ndarray:
    """Derivative from local polynomial interpolation on ``width`` neighbouring nodes.

    Interior nodes use centred stencils; the first and last nodes fall back to
    one-sided stencils of the same order.
    """
    n = t.size
    width = min(width, n)
    half = width // 2
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        x = t[lo : lo + width] - t[i]
        scale = np.max(np.abs(x)) or 1.0
        xs = x / scale
        # derivative weights: solve V^T w = e_1 for the monomial basis
        vander = np.vander(xs, width, increasing=True).T
        rhs = np.zeros(width)
        rhs[1] = 1.0
        w = np.linalg.solve(vander, rhs) / scale
        out[i] = w @ y[lo : lo + width]
    return out


def energy_balance_residual(trajectory: TrajectoryRecord) -> np.ndarray:
    """(d/dt ||u||^2_{H^1_alpha} + 2 nu ||grad u||^2) / initial energy at each sample.

    The derivative is a five-point finite difference over the per-step record.
    """
    steps = trajectory.steps
    if len(steps) < 3:
        raise ValidationError("energy balance needs at least three recorded states")
    e0 = steps.h1alpha_sq[0]
    if e0 == 0:
        return np.zeros(len(trajectory.series))
    nu = trajectory.config.params.nu
    dedt = _fd_derivative(steps.times, steps.h1alpha_sq)
    resid = (dedt + 2 * nu * steps.h1dot_sq) / e0
    return resid[trajectory.sample_indices]


def check_lemma_bound(
    trajectory: TrajectoryRecord,
    u0: SpectralVectorField | None = None,
    c_fit: float | None = None,
    rtol: float = 1e-6,
) -> LemmaCheck:
    """Per-mode check of |u(k,t)|^2 <= C (e^{2tM}|u0(k)|^2 + |k|^2 (int_0^t ||u||^2)^2).

    Amplitudes are whole-space normalised (``L**3 * c_k``). The second term is
    dropped for runs without the nonlinearity. With ``c_fit`` omitted the
    smallest admissible constant is fitted and the check passes when finite.
    """
    u0 = u0 or trajectory.initial
    grid = u0.grid
    params = trajectory.config.params
    vol = grid.box_length**3
    a0 = np.sum(np.abs(u0.coefficients) ** 2, axis=0) * vol**2
    c_req, n = 0.0, 0
    for t, f in sorted(trajectory.snapshots.items()):
        lhs = np.sum(np.abs(f.coefficients) ** 2, axis=0) * vol**2
        rhs = voigt_multiplier(grid.k_mag, params, t) ** 2 * a0
        if trajectory.config.nonlinear:
            rhs = rhs + grid.k2 * trajectory.cumulative_l2_at(t) ** 2
        pos = rhs > 0
        if np.any(lhs[~pos] > 0):
            c_req = math.inf
        if pos.any():
            c_req = max(c_req, float(np.max(lhs[pos] / rhs[pos])))
        n += lhs.size
    if c_fit is None:
        c_fit = c_req
    passed = math.isfinite(c_req) and c_req <= c_fit * (1 + rtol)
    ratio = c_req / c_fit if c_fit > 0 else (0.0 if c_req == 0 else math.inf)
    return LemmaCheck(passed, float(c_fit), float(c_req), float(ratio), n)


def config_from_dict(raw: dict, base_dir=None) -> SolverConfig:
    """Build a configuration from a nested or dotted-key mapping.

    Recognised keys: grid.n_points, grid.box_length, physics.alpha, physics.nu,
    time.dt, time.t_end, time.samples_per_decade, datum.file, datum.h1alpha,
    nonlinearity, snapshots.times.
    """
    from pathlib import Path

    from .decay_character import read_datum_file

    flat = {}

    def walk(prefix, obj):
        for k, v in obj.items():
            key = f"{prefix}.{k}" if prefix else k
            if isinstance(v, dict):
                walk(key, v)
            else:
                flat[key] = v

    walk("", raw)
    known = {
        "grid.n_points", "grid.box_length", "physics.alpha", "physics.nu", "time.dt", "time.t_end",
        "time.samples_per_decade", "datum.file", "datum.h1alpha", "nonlinearity", "snapshots.times",
    }
    unknown = set(flat) - known
    if unknown:
        raise ValidationError(f"unknown configuration keys: {sorted(unknown)}")
    try:
        grid = Grid(int(flat.get("grid.n_points", 64)), float(flat.get("grid.box_length", 128 * math.pi)))
        params = PhysicsParams(float(flat.get("physics.alpha", 0.1)), float(flat.get("physics.nu", 0.05)))
        dt = float(flat.get("time.dt", 8.0))
        t_end = float(flat.get("time.t_end", max_trustworthy_time(grid)))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid configuration value: {exc}") from exc
    if not (dt > 0 and t_end >= 0):
        raise ValidationError(f"need dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")
    datum = None
    if "datum.file" in flat:
        path = Path(flat["datum.file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        datum = read_datum_file(path)
    per_decade = int(flat.get("time.samples_per_decade", 64))
    samples = np.concatenate([[0.0], log_times(dt, t_end, per_decade)]) if t_end > dt else np.array([0.0, t_end])
    return SolverConfig(
        grid=grid,
        params=params,
        dt=dt,
        t_end=t_end,
        sample_times=samples,
        snapshot_times=np.asarray(flat.get("snapshots.times", []), dtype=float),
        nonlinear=bool(flat.get("nonlinearity", True)),
        datum=datum,
        h1alpha=flat.get("datum.h1alpha", 0.1),
    )


def with_nonlinearity(config: SolverConfig, enabled: bool) -> SolverConfig:
    return replace(config, nonlinear=enabled)
