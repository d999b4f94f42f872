import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsvdecay.errors import DomainError, ValidationError
from nsvdecay.spectral import (
    Grid,
    PhysicsParams,
    SpectralVectorField,
    dealias,
    h1alpha_norm_sq,
    hermitian_defect,
    helmholtz_inverse_factor,
    leray_project,
    physical_l2_sq,
    random_solenoidal_field,
    read_snapshot,
    transform_roundtrip,
    voigt_multiplier,
    write_snapshot,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture(scope="module")
def grid():
    return Grid(16, 2 * math.pi * 3)


def test_grid_wavenumbers(grid):
    nonzero = grid.k_mag[grid.k_mag > 0]
    assert nonzero.min() == pytest.approx(2 * math.pi / grid.box_length, rel=1e-15)
    idx = set(grid.index[np.abs(grid.index) < grid.n_points // 2])
    assert idx == {-i for i in idx}


@pytest.mark.parametrize("n_points", [0, 7, -4])
def test_grid_rejects_odd_or_empty(n_points):
    with pytest.raises(ValidationError):
        Grid(n_points)


def test_constant_field_rejected(grid):
    with pytest.raises(ValidationError, match="mean"):
        SpectralVectorField.from_physical(grid, np.ones((3,) + grid.shape))


def test_grid_size_mismatch(grid):
    with pytest.raises(ValidationError):
        SpectralVectorField.from_physical(grid, np.zeros((3, 8, 8, 8)))


def test_single_sine_has_two_conjugate_coefficients(grid):
    x = grid.coordinates[0]
    u = np.zeros((3,) + grid.shape)
    u[0] = np.sin(2 * math.pi * x / grid.box_length)
    c = SpectralVectorField.from_physical(grid, u).coefficients
    nz = np.argwhere(np.abs(c) > 1e-14)
    assert len(nz) == 2
    assert c[0, 1, 0, 0] == pytest.approx(-0.5j, abs=1e-15)
    assert c[0, -1, 0, 0] == pytest.approx(np.conj(c[0, 1, 0, 0]), abs=1e-15)


@settings(max_examples=15, deadline=None)
@given(seed=seeds, n_points=st.sampled_from([8, 12, 16]))
def test_parseval_and_roundtrip(seed, n_points):
    g = Grid(n_points, 7.5)
    f = random_solenoidal_field(g, np.random.default_rng(seed), max_index=n_points // 2 - 1)
    phys = f.to_physical()
    spectral = h1alpha_norm_sq(f, PhysicsParams()).l2_sq
    assert rel(physical_l2_sq(g, phys), spectral) < 1e-12
    back = transform_roundtrip(f)
    scale = np.max(np.abs(f.coefficients))
    assert np.max(np.abs(back.coefficients - f.coefficients)) < 1e-12 * scale
    assert hermitian_defect(f.coefficients) < 1e-12


def test_gradient_field_projects_to_zero(grid):
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(grid.shape)
    phi_hat = np.fft.fftn(phi) / grid.n_points**3
    c = 1j * grid.k * phi_hat
    c[:, 0, 0, 0] = 0
    f = SpectralVectorField(grid, c)
    assert np.max(np.abs(leray_project(f).coefficients)) < 1e-15 * np.max(np.abs(c)) + 1e-30


@settings(max_examples=10, deadline=None)
@given(seed=seeds)
def test_projection_idempotent_and_solenoidal(seed):
    g = Grid(12, 5.0)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((3,) + g.shape)
    u -= u.mean(axis=(1, 2, 3), keepdims=True)
    f = SpectralVectorField.from_physical(g, u)
    p = leray_project(f)
    pp = leray_project(p)
    scale = np.max(np.abs(p.coefficients))
    assert np.max(np.abs(pp.coefficients - p.coefficients)) <= 1e-14 * scale
    c = p.coefficients
    amp = np.sqrt(np.sum(np.abs(c) ** 2, axis=0))
    kc = np.abs(np.einsum("i...,i...->...", g.k, c))
    live = amp > 1e-3 * amp.max()
    assert np.max(kc[live] / (g.k_mag[live] * amp[live])) < 1e-12


def test_voigt_multiplier_values():
    p = PhysicsParams(alpha=1.0, nu=1.0)
    assert voigt_multiplier(0.0, p, 12.0) == 1.0
    assert voigt_multiplier(1.0, p, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert voigt_multiplier(1.0, p, 1.0) == pytest.approx(0.606531, abs=1e-6)
    heat = PhysicsParams(alpha=0.0, nu=0.3)
    k = np.linspace(0, 5, 11)
    assert np.allclose(voigt_multiplier(k, heat, 2.0), np.exp(-0.3 * k**2 * 2.0), rtol=1e-15)
    q = PhysicsParams(alpha=0.2, nu=0.3)
    assert voigt_multiplier(1e9, q, 2.0) == pytest.approx(math.exp(-0.3 * 2.0 / 0.04), rel=1e-12)
    with pytest.raises(DomainError):
        voigt_multiplier(1.0, q, -1e-3)


@given(
    k=st.floats(0, 50),
    t1=st.floats(0, 100),
    t2=st.floats(0, 100),
    alpha=st.floats(0, 2),
    nu=st.floats(1e-3, 2),
)
def test_multiplier_semigroup_and_monotone(k, t1, t2, alpha, nu):
    p = PhysicsParams(alpha, nu)
    joint = voigt_multiplier(k, p, t1 + t2)
    split = voigt_multiplier(k, p, t1) * voigt_multiplier(k, p, t2)
    if joint > 1e-300:
        assert rel(split, joint) < 1e-14 * max(1.0, abs(math.log(joint)))
    assert voigt_multiplier(k, p, t1 + t2) <= voigt_multiplier(k, p, t1)
    assert voigt_multiplier(k + 1.0, p, t1) <= voigt_multiplier(k, p, t1)
    assert 0 <= joint <= 1


def test_helmholtz_inverse_factor():
    assert helmholtz_inverse_factor(0.0, PhysicsParams(1.0, 2.0)) == 1.0
    assert helmholtz_inverse_factor(1.0, PhysicsParams(1.0, 2.0)) == 0.5
    assert np.all(helmholtz_inverse_factor(np.arange(5.0), PhysicsParams(0.0, 1.0)) == 1.0)


def test_single_mode_norms(grid):
    p = PhysicsParams(alpha=0.3, nu=0.5)
    c = np.zeros((3,) + grid.shape, dtype=complex)
    amp = 0.25 - 0.1j
    c[2, 1, 2, 0] = amp
    c[2, -1, -2, 0] = np.conj(amp)
    f = SpectralVectorField(grid, c)
    k0sq = 5 * grid.dk**2
    vol = grid.box_length**3
    l2, h1, h1a = h1alpha_norm_sq(f, p)
    assert h1a == pytest.approx((1 + p.alpha**2 * k0sq) * 2 * vol * abs(amp) ** 2, rel=1e-14)
    assert h1a == l2 + p.alpha**2 * h1
    assert h1alpha_norm_sq(f, PhysicsParams(0.0, 1.0)).h1alpha_sq == l2


def _fd_weights(half_width):
    """Central first-derivative weights of order 2*half_width on a unit grid."""
    offs = np.arange(-half_width, half_width + 1)
    vander = np.vander(offs.astype(float), len(offs), increasing=True).T
    rhs = np.zeros(len(offs))
    rhs[1] = 1.0
    return offs, np.linalg.solve(vander, rhs)


def test_h1dot_against_finite_difference_gradient():
    # band-limited field evaluated on a refined grid by explicit trigonometric sums,
    # differentiated by a 16th-order stencil and integrated by the rectangle rule
    g = Grid(8, 3.0)
    f = random_solenoidal_field(g, np.random.default_rng(11), max_index=2)
    m = 64
    h = g.box_length / m
    x = np.arange(m) * h
    e = np.exp(1j * np.outer(x, g.k1d))
    u = np.real(np.einsum("cabd,xa,yb,zd->cxyz", f.coefficients, e, e, e, optimize=True))
    offs, w = _fd_weights(8)
    grad_sq = 0.0
    for axis in (1, 2, 3):
        d = sum(wi * np.roll(u, -o, axis=axis) for o, wi in zip(offs, w)) / h
        grad_sq += np.sum(d**2) * h**3
    exact = h1alpha_norm_sq(f, PhysicsParams()).h1dot_sq
    assert rel(grad_sq, exact) < 1e-10


def test_dealias(grid):
    rng = np.random.default_rng(5)
    inner = random_solenoidal_field(grid, rng, max_index=grid.n_points // 3)
    assert np.array_equal(dealias(inner).coefficients, inner.coefficients)
    c = np.zeros((3,) + grid.shape, dtype=complex)
    c[0, grid.n_points // 2, 0, 0] = 1.0
    assert not np.any(dealias(SpectralVectorField(grid, c)).coefficients)
    once = dealias(random_solenoidal_field(grid, rng, max_index=grid.n_points // 2 - 1))
    assert np.array_equal(dealias(once).coefficients, once.coefficients)


def test_dealiased_product_of_two_modes():
    # cos(a x) cos(b y) = [cos(a x + b y) + cos(a x - b y)] / 2: four coefficients of 1/4
    g = Grid(16, 2 * math.pi)
    x, y, _ = g.coordinates
    u = np.zeros((3,) + g.shape)
    u[0] = np.cos(2 * x) * np.cos(3 * y)
    c = dealias(SpectralVectorField.from_physical(g, u)).coefficients.copy()
    for i, j in [(2, 3), (2, -3), (-2, 3), (-2, -3)]:
        assert abs(c[0, i, j, 0] - 0.25) < 1e-12
    c[0, [2, 2, -2, -2], [3, -3, 3, -3], 0] = 0
    assert np.max(np.abs(c)) < 1e-12
    # a product landing outside the retained band is removed entirely
    u[0] = np.cos(4 * x) * np.cos(2 * x)
    assert np.max(np.abs(dealias(SpectralVectorField.from_physical(g, u)).coefficients[0, 6])) == 0


def test_snapshot_roundtrip(tmp_path, grid):
    f = random_solenoidal_field(grid, np.random.default_rng(2))
    p = PhysicsParams(0.2, 0.07)
    path = tmp_path / "s.snap"
    write_snapshot(path, f, p)
    g, q = read_snapshot(path)
    assert np.array_equal(g.coefficients, f.coefficients)
    assert g.grid == grid and q == p
    raw = path.read_bytes()
    assert len(raw) == 40 + 16 * 3 * grid.n_points**3
    (tmp_path / "bad.snap").write_bytes(raw[:-16])
    with pytest.raises(ValidationError):
        read_snapshot(tmp_path / "bad.snap")


def test_fields_are_immutable(grid):
    f = random_solenoidal_field(grid, np.random.default_rng(0))
    with pytest.raises(ValueError):
        f.coefficients[0, 1, 0, 0] = 1.0
