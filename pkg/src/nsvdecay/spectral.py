"""Periodic-box spectral representation of 3-component velocity fields.

Coefficients are stored as full (Hermitian-redundant) complex arrays of
shape ``(3, N, N, N)`` in numpy FFT index order, normalised so that

    u(x) = sum_k c_k exp(i k.x),    c = fftn(u) / N**3.

Norms are box integrals, e.g. ``||u||^2 = L**3 * sum_k |c_k|^2``, which is the
periodic analogue of the whole-space Plancherel identity.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, ValidationError

TWO_PI = 2.0 * np.pi
ZERO_MEAN_RTOL = 1e-12
HERMITIAN_RTOL = 1e-12

_HEADER = struct.Struct("<qqddd")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of ``n_points**3`` points on a cube of side ``box_length``."""

    n_points: int
    box_length: float = TWO_PI * 64
    n: int = 3

    def __post_init__(self):
        if self.n != 3:
            raise ValidationError(f"only three-dimensional grids are supported, got n={self.n}")
        if self.n_points <= 0 or self.n_points % 2:
            raise ValidationError(f"n_points must be a positive even integer, got {self.n_points}")
        if not self.box_length > 0:
            raise ValidationError(f"box_length must be positive, got {self.box_length}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_points,) * 3

    @property
    def dk(self) -> float:
        """Smallest nonzero wavenumber magnitude, 2*pi/L."""
        return TWO_PI / self.box_length

    @property
    def dx(self) -> float:
        return self.box_length / self.n_points

    @cached_property
    def index(self) -> np.ndarray:
        """Integer wavenumber indices along one axis in FFT order."""
        return np.fft.fftfreq(self.n_points, d=1.0 / self.n_points).astype(int)

    @cached_property
    def k1d(self) -> np.ndarray:
        return self.index * self.dk

    @cached_property
    def k(self) -> np.ndarray:
        """Wave vectors, shape ``(3, N, N, N)``."""
        return np.stack(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.k**2, axis=0)

    @cached_property
    def k_mag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True where every axis index satisfies 3|m| < N (alias-free for quadratic products)."""
        keep = 3 * np.abs(self.index) < self.n_points
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]

    @cached_property
    def coordinates(self) -> np.ndarray:
        x = np.arange(self.n_points) * self.dx
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))


@dataclass(frozen=True)
class PhysicsParams:
    """Voigt length ``alpha``, viscosity ``nu`` and spatial dimension ``n``."""

    alpha: float = 0.1
    nu: float = 0.05
    n: int = 3

    def __post_init__(self):
        if self.alpha < 0:
            raise ValidationError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.nu > 0:
            raise ValidationError(f"nu must be positive, got {self.nu}")
        if self.n < 1:
            raise ValidationError(f"dimension must be positive, got {self.n}")

    @property
    def within_hypotheses(self) -> bool:
        """Whether nu > alpha**2, the regime covered by the decay theorems."""
        return self.nu > self.alpha**2

    @property
    def hypothesis_note(self) -> str | None:
        return None if self.within_hypotheses else "outside the decay regime (nu <= alpha^2)"


class NormTriple(NamedTuple):
    l2_sq: float
    h1dot_sq: float
    h1alpha_sq: float


def _mirror(c: np.ndarray) -> np.ndarray:
    """Return ``m`` with ``m[..., k] = c[..., -k]`` over the last three axes."""
    out = np.flip(c, axis=(-3, -2, -1))
    return np.roll(out, 1, axis=(-3, -2, -1))


def symmetrize(c: np.ndarray) -> np.ndarray:
    """Project coefficients onto the Hermitian (real-field) subspace."""
    return 0.5 * (c + np.conj(_mirror(c)))


def hermitian_defect(c: np.ndarray) -> float:
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(c - np.conj(_mirror(c)))) / scale)


def _check_coefficients(grid: Grid, coefficients) -> np.ndarray:
    c = np.asarray(coefficients, dtype=np.complex128)
    expected = (3,) + grid.shape
    if c.shape != expected:
        raise ValidationError(f"coefficient array has shape {c.shape}, grid requires {expected}")
    return c


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    """Real, mean-free vector field held as Fourier coefficients on ``grid``."""

    grid: Grid
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = _check_coefficients(self.grid, self.coefficients)
        scale = np.max(np.abs(c))
        mean = np.max(np.abs(c[:, 0, 0, 0]))
        if mean > ZERO_MEAN_RTOL * scale and mean > 0:
            raise ValidationError(
                f"field has a nonzero mean (|c_0| = {mean:.3e}); velocities must be mean-free"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralVectorField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, grid: Grid, u: np.ndarray) -> "SpectralVectorField":
        u = np.asarray(u)
        if u.shape != (3,) + grid.shape:
            raise ValidationError(f"physical array has shape {u.shape}, grid requires {(3,) + grid.shape}")
        if np.iscomplexobj(u):
            raise ValidationError("physical velocity must be real")
        c = sfft.fftn(u, axes=(1, 2, 3)) / grid.n_points**3
        return cls(grid, c)

    def to_physical(self) -> np.ndarray:
        N = self.grid.n_points
        half = self.coefficients[..., : N // 2 + 1]
        return sfft.irfftn(half, s=self.grid.shape, axes=(1, 2, 3)) * N**3

    def validate(self) -> "SpectralVectorField":
        """Check Hermitian symmetry; returns ``self`` for chaining."""
        defect = hermitian_defect(self.coefficients)
        if defect > HERMITIAN_RTOL:
            raise ValidationError(f"coefficients are not Hermitian (relative defect {defect:.3e})")
        return self

    def with_coefficients(self, c: np.ndarray) -> "SpectralVectorField":
        return type(self)(self.grid, c)

    def __add__(self, other):
        _same_grid(self, other)
        return type(self)(self.grid, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _same_grid(self, other)
        return type(self)(self.grid, self.coefficients - other.coefficients)

    def scaled(self, factor: float) -> "SpectralVectorField":
        return type(self)(self.grid, self.coefficients * factor)


class NonlinearFluxSpectrum(SpectralVectorField):
    """Fourier coefficients of the projected convective term."""


def _same_grid(a, b):
    if a.grid != b.grid:
        raise ValidationError("fields live on different grids")


def transform_roundtrip(f: SpectralVectorField) -> SpectralVectorField:
    """Inverse transform to physical space and back again."""
    return SpectralVectorField.from_physical(f.grid, f.to_physical())


def physical_l2_sq(grid: Grid, u: np.ndarray) -> float:
    """Rectangle-rule box integral of |u|^2 (exact for trigonometric polynomials)."""
    return float(np.sum(u**2) * grid.dx**3)


def project_coefficients(c: np.ndarray, k: np.ndarray, k2: np.ndarray) -> np.ndarray:
    """Per-mode c - k (k.c)/|k|^2 with the k = 0 mode set to zero."""
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    kc = np.einsum("i...,i...->...", k, c)
    out = c - k * (kc * inv)
    out[(slice(None),) + (k2 == 0).nonzero()] = 0.0
    return out


def leray_project(f: SpectralVectorField) -> SpectralVectorField:
    g = f.grid
    return f.with_coefficients(project_coefficients(f.coefficients, g.k, g.k2))


def max_divergence(f: SpectralVectorField) -> float:
    """max_k |k.u(k)| / (|k| max_k |u(k)|), a scale-free divergence measure.

    Normalising by the largest coefficient rather than per mode keeps
    roundoff-level modes from dominating the diagnostic.
    """
    c = f.coefficients
    g = f.grid
    scale = np.max(np.sqrt(np.sum(np.abs(c) ** 2, axis=0)))
    if scale == 0:
        return 0.0
    kc = np.abs(np.einsum("i...,i...->...", g.k, c))
    inv = np.zeros_like(g.k_mag)
    np.divide(1.0, g.k_mag, out=inv, where=g.k_mag > 0)
    return float(np.max(kc * inv) / scale)


def voigt_multiplier(k_mag, params: PhysicsParams, t: float):
    """exp(-nu k^2 t / (1 + alpha^2 k^2)), the exact linear solution operator."""
    if t < 0:
        raise DomainError(f"t must be nonnegative (forward evolution only), got {t}")
    k2 = np.square(k_mag)
    return np.exp(-params.nu * k2 * t / (1.0 + params.alpha**2 * k2))


def helmholtz_inverse_factor(k_mag, params: PhysicsParams):
    return 1.0 / (1.0 + params.alpha**2 * np.square(k_mag))


def damping_rate(k_mag, params: PhysicsParams):
    """Per-mode decay rate nu k^2/(1 + alpha^2 k^2), bounded above by nu/alpha^2."""
    k2 = np.square(k_mag)
    return params.nu * k2 / (1.0 + params.alpha**2 * k2)


def h1alpha_norm_sq(f: SpectralVectorField, params: PhysicsParams) -> NormTriple:
    g = f.grid
    energy = np.sum(np.abs(f.coefficients) ** 2, axis=0)
    vol = g.box_length**3
    l2 = float(np.sum(energy) * vol)
    h1dot = float(np.sum(g.k2 * energy) * vol)
    return NormTriple(l2, h1dot, l2 + params.alpha**2 * h1dot)


def dealias(flux: SpectralVectorField) -> SpectralVectorField:
    """Two-thirds rule: zero every mode with an axis index |m| >= N/3."""
    return flux.with_coefficients(np.where(flux.grid.dealias_mask, flux.coefficients, 0.0))


def random_solenoidal_field(
    grid: Grid,
    rng: np.random.Generator,
    max_index: int | None = None,
    h1alpha: float | None = None,
    params: PhysicsParams | None = None,
) -> SpectralVectorField:
    """Random real divergence-free field, band-limited to axis indices <= ``max_index``.

    ``max_index`` defaults to the dealiased band. When ``h1alpha`` is given the
    field is rescaled to that H^1_alpha norm under ``params``.
    """
    if max_index is None:
        max_index = (grid.n_points - 1) // 3
    u = rng.standard_normal((3,) + grid.shape)
    c = sfft.fftn(u, axes=(1, 2, 3)) / grid.n_points**3
    keep1 = (np.abs(grid.index) <= max_index) & (grid.index != -grid.n_points // 2)
    keep = keep1[:, None, None] & keep1[None, :, None] & keep1[None, None, :]
    c = np.where(keep, c, 0.0)
    c = symmetrize(project_coefficients(c, grid.k, grid.k2))
    out = SpectralVectorField(grid, c)
    if h1alpha is not None:
        norm = h1alpha_norm_sq(out, params or PhysicsParams()).h1alpha_sq
        out = out.scaled(h1alpha / np.sqrt(norm))
    return out


def write_snapshot(path, f: SpectralVectorField, params: PhysicsParams) -> None:
    """Binary snapshot: little-endian header (n, N, L, alpha, nu) then coefficients.

    Coefficients follow as interleaved little-endian complex128 values ordered
    row-major over wavenumber indices (FFT order), three components per mode.
    """
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.n, g.n_points, g.box_length, params.alpha, params.nu))
        fh.write(np.ascontiguousarray(np.moveaxis(f.coefficients, 0, -1)).astype("<c16").tobytes())


def read_snapshot(path) -> tuple[SpectralVectorField, PhysicsParams]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated snapshot header")
    n, N, L, alpha, nu = _HEADER.unpack_from(data)
    grid = Grid(int(N), float(L), int(n))
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if body.size != 3 * N**3:
        raise ValidationError(f"{path}: expected {3 * N**3} coefficients, found {body.size}")
    c = np.moveaxis(body.reshape(grid.shape + (3,)), -1, 0).astype(np.complex128)
    return SpectralVectorField(grid, c), PhysicsParams(alpha, nu, int(n))
