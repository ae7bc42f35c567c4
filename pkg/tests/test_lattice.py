import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from lscox.lattice import CLASS_ROLE, LEVEL_ROLE, PointPattern, bin_points, \
    build_lattice, next_fft_size


def test_lattice_geometry():
    lat = build_lattice((2.0, 1.0), 20, 10)
    assert lat.shape == (10, 20)
    assert lat.n_cells == 200
    assert_allclose(lat.cell_width, 0.1)
    assert_allclose(lat.cell_height, 0.1)
    assert_allclose(lat.cell_area, 0.01)
    assert_allclose(lat.cell_x[0], 0.05)
    assert_allclose(lat.cell_x[-1], 1.95)
    assert_allclose(lat.cell_y[-1], 0.95)


def test_extended_shape_covers_margin():
    lat = build_lattice((1.0, 1.0), 16, 16, margin_level=0.5, margin_class=0.3)
    rows, cols = lat.extended_shape(LEVEL_ROLE)
    # margin 0.5 on each side needs at least 16 extra cells per axis
    assert rows >= 32 and cols >= 32
    rows_c, cols_c = lat.extended_shape(CLASS_ROLE)
    assert 32 > rows_c >= 16 + 2 * 5

    for n in (rows, cols, rows_c, cols_c):
        assert n == next_fft_size(n)


def test_extended_shape_zero_margin_is_window():
    lat = build_lattice((1.0, 1.0), 12, 12)
    assert lat.extended_shape(LEVEL_ROLE) == (12, 12)


def test_next_fft_size_five_smooth():
    for n in (1, 7, 11, 16, 17, 97, 255):
        m = next_fft_size(n)
        assert m >= n
        k = m
        for p in (2, 3, 5):
            while k % p == 0:
                k //= p
        assert k == 1


def test_build_lattice_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_lattice((0.0, 1.0), 4, 4)
    with pytest.raises(ValueError):
        build_lattice((1.0, 1.0), 0, 4)
    with pytest.raises(ValueError):
        build_lattice((1.0, 1.0), 4, 4, margin_level=-0.1)


def test_bin_points_known_cells():
    lat = build_lattice((1.0, 1.0), 2, 2)
    pat = PointPattern(np.array([[0.1, 0.1], [0.9, 0.1], [0.2, 0.8],
                                 [0.6, 0.6], [0.5, 0.5]]))
    grid = bin_points(pat, lat)
    # (0.5, 0.5) sits on the shared corner; interior edges bin up/right
    assert grid.counts[0, 0] == 1
    assert grid.counts[0, 1] == 1
    assert grid.counts[1, 0] == 1
    assert grid.counts[1, 1] == 2
    assert grid.n_outside == 0


def test_bin_points_boundary_closure():
    lat = build_lattice((1.0, 1.0), 4, 4)
    pat = PointPattern(np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0],
                                 [0.0, 1.0]]))
    grid = bin_points(pat, lat)
    # the window is closed on all sides; corners land in corner cells
    assert grid.counts[0, 0] == 1
    assert grid.counts[3, 3] == 1
    assert grid.counts[0, 3] == 1
    assert grid.counts[3, 0] == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 400), st.integers(1, 9), st.integers(1, 9),
       st.integers(0, 2**32 - 1))
def test_bin_points_conserves_interior_points(n, nx, ny, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 1.2, size=(n, 2)) * np.array([2.0, 1.0])
    lat = build_lattice((2.0, 1.0), nx, ny)
    grid = bin_points(PointPattern(pts), lat)
    inside = ((pts[:, 0] >= 0) & (pts[:, 0] <= 2.0)
              & (pts[:, 1] >= 0) & (pts[:, 1] <= 1.0)).sum()
    assert grid.total == inside
    assert grid.total + grid.n_outside == n
    assert (grid.counts >= 0).all()


def test_pattern_accessors():
    pts = np.array([[0.1, 0.2], [0.3, 0.4]])
    pat = PointPattern(pts)
    assert len(pat) == 2
    assert_allclose(pat.x, [0.1, 0.3])
    assert_allclose(pat.y, [0.2, 0.4])
    with pytest.raises(ValueError):
        PointPattern(np.zeros((3, 3)))
