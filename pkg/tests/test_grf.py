import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from lscox.grf import MaternSpec, frequency_grid, full_order, matern_cov, \
    matern_spectral_density, project, sample_cholesky, sample_fft, \
    spectrum_weights, truncation_mask
from lscox.lattice import LEVEL_ROLE, build_lattice


def test_matern_cov_basic_values():
    spec = MaternSpec(sigma=1.0, rho=0.3, nu=1.0)
    assert_allclose(matern_cov(0.0, spec), 1.0)
    # nu=1 correlation at the range distance is sqrt(8) K_1(sqrt(8))
    assert_allclose(matern_cov(0.3, spec), 0.1396674740, atol=1e-9)
    assert matern_cov(10.0, spec) < 1e-10
    spec2 = MaternSpec(sigma=2.0, rho=0.3, nu=1.0)
    assert_allclose(matern_cov(0.0, spec2), 4.0)
    assert_allclose(matern_cov(0.3, spec2), 4.0 * 0.1396674740, rtol=1e-8)


def test_matern_cov_monotone_decreasing():
    spec = MaternSpec(sigma=1.3, rho=0.5, nu=1.0)
    h = np.linspace(0.0, 2.0, 200)
    c = matern_cov(h, spec)
    assert (np.diff(c) < 0).all()


def test_spectral_density_integrates_to_variance():
    # direct quadrature of the closed form over a fine frequency grid
    spec = MaternSpec(sigma=1.4, rho=0.25, nu=1.0)
    half = 800.0
    n = 4096
    f = np.linspace(-half, half, n, endpoint=False)
    df = f[1] - f[0]
    gx, gy = np.meshgrid(f, f)
    dens = matern_spectral_density(np.stack([gx, gy], axis=-1), spec)
    total = dens.sum() * df * df
    assert_allclose(total, spec.sigma**2, rtol=1e-3)


def test_spectrum_weights_sum_to_variance():
    # the sampler's discrete weights renormalize to sigma^2 exactly
    lat = build_lattice((1.0, 1.0), 16, 16, margin_level=0.5)
    spec = MaternSpec(sigma=1.7, rho=0.3, nu=1.0)
    w = spectrum_weights(spec, lat, LEVEL_ROLE)
    assert_allclose(w.sum(), spec.sigma**2, rtol=1e-12)
    mask = truncation_mask(lat, LEVEL_ROLE, order=4)
    w_tr = spectrum_weights(spec, lat, LEVEL_ROLE, order=4)
    assert_allclose(w_tr[mask].sum(), spec.sigma**2, rtol=1e-12)
    assert (w_tr[~mask] == 0).all()


def test_truncation_mask_counts():
    lat = build_lattice((1.0, 1.0), 16, 16, margin_level=0.5)
    mask = truncation_mask(lat, LEVEL_ROLE, order=3)
    # indices -3..3 per axis
    assert mask.sum() == 7 * 7
    full = truncation_mask(lat, LEVEL_ROLE, order=None)
    assert full.all()
    assert full_order(lat, LEVEL_ROLE) >= 16


def test_frequency_grid_shapes():
    lat = build_lattice((1.0, 1.0), 8, 8, margin_level=0.5)
    fy, fx = frequency_grid(lat, LEVEL_ROLE)
    rows, cols = lat.extended_shape(LEVEL_ROLE)
    assert fy.shape == (rows, 1)
    assert fx.shape == (1, cols)
    assert fx[0, 0] == 0.0


def test_sample_fft_deterministic_and_window_shape():
    lat = build_lattice((1.0, 1.0), 12, 12, margin_level=0.4)
    spec = MaternSpec(sigma=1.0, rho=0.3, nu=1.0)
    a = sample_fft(spec, lat, np.random.default_rng(5), role=LEVEL_ROLE)
    b = sample_fft(spec, lat, np.random.default_rng(5), role=LEVEL_ROLE)
    assert a.values.shape == lat.shape
    assert_allclose(a.values, b.values)
    assert a.values_ext.shape == lat.extended_shape(LEVEL_ROLE)


def test_sample_marginal_variance():
    lat = build_lattice((1.0, 1.0), 16, 16, margin_level=0.5)
    spec = MaternSpec(sigma=1.0, rho=0.3, nu=1.0)
    rng = np.random.default_rng(11)
    draws = np.stack([sample_fft(spec, lat, rng, role=LEVEL_ROLE).values
                      for _ in range(400)])
    var = draws.var(axis=0).mean()
    assert abs(var - 1.0) < 0.05


def test_fft_vs_cholesky_single_functional():
    # quick distributional cross-check; the exhaustive one is an
    # acceptance criterion
    lat = build_lattice((1.0, 1.0), 8, 8, margin_level=0.5)
    spec = MaternSpec(sigma=1.0, rho=0.3, nu=1.0)
    rng = np.random.default_rng(2)
    n = 1200
    f = np.array([sample_fft(spec, lat, rng, role=LEVEL_ROLE).values.sum()
                  for _ in range(n)])
    c = np.array([sample_cholesky(spec, lat, rng).sum() for _ in range(n)])
    assert stats.ks_2samp(f, c).pvalue > 0.01


def test_cholesky_covariance_matches_matern():
    lat = build_lattice((1.0, 1.0), 6, 6)
    spec = MaternSpec(sigma=1.2, rho=0.35, nu=1.0)
    rng = np.random.default_rng(3)
    draws = np.stack([sample_cholesky(spec, lat, rng) for _ in range(3000)])
    # neighbors along x at one cell spacing
    emp = np.mean(draws[:, 0, 0] * draws[:, 0, 1])
    expect = matern_cov(lat.cell_width, spec)
    assert abs(emp - expect) < 0.08


def test_project_is_idempotent():
    lat = build_lattice((1.0, 1.0), 12, 12, margin_level=0.4)
    spec = MaternSpec(sigma=1.0, rho=0.3, nu=1.0)
    fld = sample_fft(spec, lat, np.random.default_rng(9), role=LEVEL_ROLE)
    once = project(fld, 4)
    twice = project(once, 4)
    assert_allclose(once.values_ext, twice.values_ext, atol=1e-12)
    # projecting to the full resolved order changes nothing
    untouched = project(fld, full_order(lat, LEVEL_ROLE))
    assert_allclose(untouched.values_ext, fld.values_ext, atol=1e-12)
    # variance can only shrink under truncation
    assert once.values_ext.var() <= fld.values_ext.var() + 1e-12
    with pytest.raises(ValueError):
        project(once, 8)


def test_sample_cholesky_refuses_large_grids():
    lat = build_lattice((1.0, 1.0), 80, 80)
    spec = MaternSpec(sigma=1.0, rho=0.3, nu=1.0)
    with pytest.raises(ValueError):
        sample_cholesky(spec, lat, np.random.default_rng(0))


def test_matern_spec_validation():
    with pytest.raises(ValueError):
        MaternSpec(sigma=-1.0, rho=0.3)
    with pytest.raises(ValueError):
        MaternSpec(sigma=1.0, rho=0.0)
