import numpy as np
import pytest
from numpy.testing import assert_allclose

from lscox.data import Raster, bicubic_to_lattice, holm_bonferroni, \
    load_pattern, load_raster, sobel_slope, standardize, vif_prune
from lscox.lattice import build_lattice


def test_load_pattern_round_trip(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("x,y\n0.1,0.2\n0.3,0.4\n\n0.5,0.6\n")
    pat = load_pattern(p)
    assert len(pat) == 3
    assert_allclose(pat.points, [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])


def test_load_pattern_requires_header(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("0.1,0.2\n")
    with pytest.raises(ValueError, match="header"):
        load_pattern(p)


def test_load_pattern_reports_line_numbers(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("x,y\n0.1,0.2\n0.3,oops\n")
    with pytest.raises(ValueError, match="line 3"):
        load_pattern(p)
    p.write_text("x,y\n0.1,0.2\nnan,0.4\n")
    with pytest.raises(ValueError, match="line 3"):
        load_pattern(p)


def test_load_raster_with_header(tmp_path):
    p = tmp_path / "r.asc"
    p.write_text("ncols 3\nnrows 2\ncellsize 0.5\norigin 1.0 2.0\n"
                 "1 2 3\n4 5 6\n")
    r = load_raster(p)
    assert r.values.shape == (2, 3)
    assert r.cellsize == 0.5
    assert r.extent == (1.0, 2.5, 2.0, 3.0)
    xs, ys = r.cell_centers()
    assert_allclose(xs, [1.25, 1.75, 2.25])
    assert_allclose(ys, [2.25, 2.75])


def test_load_raster_header_row_count_mismatch(tmp_path):
    p = tmp_path / "r.asc"
    p.write_text("ncols 3\nnrows 3\ncellsize 0.5\norigin 0 0\n1 2 3\n4 5 6\n")
    with pytest.raises(ValueError, match="promises 3 rows"):
        load_raster(p)


def test_load_raster_plain_matrix_needs_cellsize(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2,3\n4,5,6\n")
    with pytest.raises(ValueError, match="cellsize"):
        load_raster(p)
    r = load_raster(p, cellsize=2.0, origin=(0.0, 1.0))
    assert r.values.shape == (2, 3)
    assert r.y0 == 1.0


def test_load_raster_ragged_rows(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2,3\n4,5\n")
    with pytest.raises(ValueError, match="ragged"):
        load_raster(p, cellsize=1.0)


def test_load_raster_imputes_nans(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,nan,3\n4,5,6\n7,8,9\n")
    with pytest.warns(RuntimeWarning, match="imputed"):
        r = load_raster(p, cellsize=1.0)
    assert np.isfinite(r.values).all()
    # imputed value is the mean of the 4-neighbors present
    assert_allclose(r.values[0, 1], (1 + 3 + 5) / 3)


def test_raster_validation():
    with pytest.raises(ValueError):
        Raster(np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        Raster(np.zeros((2, 2)), 0.0)


def test_bicubic_reproduces_smooth_surface():
    # fine raster of a smooth function, read back at lattice centers
    cell = 1.0 / 64
    xs = (np.arange(80) + 0.5) * cell
    ys = (np.arange(80) + 0.5) * cell
    vals = np.sin(2 * np.pi * ys)[:, None] * np.cos(2 * np.pi * xs)[None, :]
    raster = Raster(vals, cell)
    lat = build_lattice((1.0, 1.0), 20, 20)
    out = bicubic_to_lattice(raster, lat)
    expect = (np.sin(2 * np.pi * lat.cell_y)[:, None]
              * np.cos(2 * np.pi * lat.cell_x)[None, :])
    assert np.abs(out - expect).max() < 1e-3


def test_bicubic_requires_coverage():
    raster = Raster(np.zeros((8, 8)), 0.1)  # covers [0, 0.8]
    lat = build_lattice((1.0, 1.0), 10, 10)
    with pytest.raises(ValueError, match="extent"):
        bicubic_to_lattice(raster, lat)


def test_bicubic_requires_minimum_nodes():
    raster = Raster(np.zeros((3, 3)), 1.0)
    lat = build_lattice((1.0, 1.0), 4, 4)
    with pytest.raises(ValueError, match="4x4"):
        bicubic_to_lattice(raster, lat)


def test_sobel_slope_on_plane():
    # grid of 2x + 3y has constant gradient magnitude sqrt(13)
    h = 0.25
    ys, xs = np.mgrid[0:12, 0:15] * h
    slope = sobel_slope(2.0 * xs + 3.0 * ys, h)
    interior = slope[1:-1, 1:-1]
    assert_allclose(interior, np.hypot(2.0, 3.0), rtol=1e-12)


def test_sobel_slope_validation():
    with pytest.raises(ValueError):
        sobel_slope(np.zeros((2, 5)), 1.0)
    with pytest.raises(ValueError):
        sobel_slope(np.zeros((5, 5)), 0.0)


def test_standardize_and_back_mapping():
    rng = np.random.default_rng(0)
    stack = np.stack([3.0 + 2.0 * rng.standard_normal((6, 7)),
                      -1.0 + 0.5 * rng.standard_normal((6, 7))])
    out, scale = standardize(stack)
    assert_allclose(out.reshape(2, -1).mean(axis=1), 0.0, atol=1e-12)
    assert_allclose(out.reshape(2, -1).std(axis=1), 1.0, atol=1e-12)

    beta_std = np.array([0.8, -0.3])
    raw, raw_icpt = scale.original_coefficients(beta_std, 2.0)
    back, back_icpt = scale.standardized_coefficients(raw, raw_icpt)
    assert_allclose(back, beta_std, atol=1e-12)
    assert_allclose(back_icpt, 2.0, atol=1e-12)
    # the two parameterizations give the same linear predictor
    flat_raw = stack.reshape(2, -1)
    lp_std = beta_std @ out.reshape(2, -1) + 2.0
    lp_raw = raw @ flat_raw + raw_icpt
    assert_allclose(lp_std, lp_raw, atol=1e-10)


def test_standardize_zero_variance_names_covariate():
    stack = np.stack([np.ones((4, 4)), np.arange(16.0).reshape(4, 4)])
    with pytest.raises(ValueError, match="flat_one"):
        standardize(stack, names=["flat_one", "ramp"])


def test_vif_prune_removes_duplicate():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((8, 8))
    b = rng.standard_normal((8, 8))
    stack = np.stack([a, b, a.copy()])
    retained, trace = vif_prune(stack, names=["a", "b", "a_copy"])
    # the duplicated pair has infinite factors; the later copy goes
    assert retained == [0, 1]
    assert trace[0][0] == "a_copy"
    assert np.isinf(trace[0][1])


def test_vif_prune_keeps_independent_covariates():
    rng = np.random.default_rng(2)
    stack = rng.standard_normal((3, 10, 10))
    retained, trace = vif_prune(stack)
    assert retained == [0, 1, 2]
    assert trace == []


def test_vif_prune_iterates_until_clean():
    rng = np.random.default_rng(3)
    base = rng.standard_normal((12, 12))
    noise = 0.05 * rng.standard_normal((12, 12))
    stack = np.stack([base, base + noise, base - noise,
                      rng.standard_normal((12, 12))])
    retained, trace = vif_prune(stack, threshold=5.0)
    assert len(trace) == 4 - len(retained) > 0
    assert 3 in retained  # the independent covariate survives


def test_vif_prune_validation():
    with pytest.raises(ValueError):
        vif_prune(np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        vif_prune(np.zeros((5, 1, 2)))


def test_holm_bonferroni_pvalue_definition():
    n = 1000
    col = np.ones(n)
    col[:2] = -1.0  # two sign exceptions: p = 2 * 2/1000
    flags, pvals = holm_bonferroni(col[:, None])
    assert_allclose(pvals[0], 0.004)
    assert flags[0]
    # all-positive column floors at 1/(n+1)
    _, p_floor = holm_bonferroni(np.ones((n, 1)))
    assert_allclose(p_floor[0], 1.0 / (n + 1))
    # balanced column caps at 1
    half = np.concatenate([np.ones(n // 2), -np.ones(n // 2)])
    _, p_half = holm_bonferroni(half[:, None])
    assert_allclose(p_half[0], 1.0)


def test_holm_bonferroni_step_down_stops_at_first_failure():
    # per-column p-values 0.002, 0.030, 0.044 against alpha 0.05:
    # 0.002 <= 0.05/3 rejects, 0.030 > 0.05/2 stops the walk, so the
    # nominally significant 0.044 is not rejected either
    n = 1000
    cols = np.ones((n, 3))
    cols[:1, 0] = -1.0
    cols[:15, 1] = -1.0
    cols[:22, 2] = -1.0
    flags, pvals = holm_bonferroni(cols)
    assert_allclose(pvals, [0.002, 0.030, 0.044])
    assert flags.tolist() == [True, False, False]


def test_holm_bonferroni_needs_draws():
    with pytest.raises(ValueError):
        holm_bonferroni(np.ones((50, 2)))
