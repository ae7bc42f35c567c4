"""Rectangular lattice geometry with periodic extension margins.

The observation window ``[0, W] x [0, H]`` is split into ``nx * ny`` equal
cells. Spectral field simulation runs on an enlarged periodic grid so that
wrap-around correlation cannot leak back into the window; the enlargement
is controlled per field role, because the level-set field and the class
fields may need different margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Field roles with independent extension margins.
LEVEL_ROLE = "level"
CLASS_ROLE = "class"


def next_fft_size(n: int) -> int:
    """Smallest integer >= n whose prime factors are all in {2, 3, 5}."""
    if n <= 1:
        return 1
    m = n
    while True:
        k = m
        for p in (2, 3, 5):
            while k % p == 0:
                k //= p
        if k == 1:
            return m
        m += 1


@dataclass(frozen=True)
class PointPattern:
    """Planar point locations in window coordinates.

    Parameters
    ----------
    points : ndarray, shape (n, 2)
        Columns are x and y coordinates.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]


@dataclass(frozen=True)
class Lattice:
    """Regular discretization of a rectangular window.

    Cell (i, j) covers ``[j*cw, (j+1)*cw) x [i*ch, (i+1)*ch)`` with i the
    row (y) index and j the column (x) index; all per-cell arrays use shape
    ``(ny, nx)``. Margins extend the grid for periodic simulation; extended
    axis sizes are rounded up to 5-smooth FFT lengths at the same spacing.
    """

    window_width: float
    window_height: float
    nx: int
    ny: int
    margin_level: float = 0.0
    margin_class: float = 0.0

    def __post_init__(self):
        if not (self.window_width > 0 and self.window_height > 0):
            raise ValueError("invalid geometry: window sides must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("invalid geometry: nx and ny must be >= 1")
        if self.margin_level < 0 or self.margin_class < 0:
            raise ValueError("margins must be nonnegative")

    @property
    def cell_width(self) -> float:
        return self.window_width / self.nx

    @property
    def cell_height(self) -> float:
        return self.window_height / self.ny

    @property
    def cell_area(self) -> float:
        return self.cell_width * self.cell_height

    @property
    def shape(self) -> tuple[int, int]:
        """Window grid shape (rows, cols) = (ny, nx)."""
        return (self.ny, self.nx)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_x(self) -> np.ndarray:
        """Cell-center x coordinates, shape (nx,)."""
        return (np.arange(self.nx) + 0.5) * self.cell_width

    @property
    def cell_y(self) -> np.ndarray:
        """Cell-center y coordinates, shape (ny,)."""
        return (np.arange(self.ny) + 0.5) * self.cell_height

    def center_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell centers, two (ny, nx) arrays (X, Y)."""
        return np.meshgrid(self.cell_x, self.cell_y)

    def margin(self, role: str) -> float:
        if role == LEVEL_ROLE:
            return self.margin_level
        if role == CLASS_ROLE:
            return self.margin_class
        raise ValueError(f"unknown field role {role!r}")

    def extended_shape(self, role: str) -> tuple[int, int]:
        """Periodic grid shape (rows, cols) for the given field role.

        Guarantees window + margin coverage on every side before rounding
        the axis sizes up to FFT-friendly lengths.
        """
        m = self.margin(role)
        # ceil with a relative guard against x/x rounding just above an integer
        def cells_for(margin, spacing):
            return int(math.ceil(margin / spacing - 1e-12))

        need_x = self.nx + 2 * cells_for(m, self.cell_width)
        need_y = self.ny + 2 * cells_for(m, self.cell_height)
        return (next_fft_size(need_y), next_fft_size(need_x))

    def extended_extent(self, role: str) -> tuple[float, float]:
        """Physical size (width, height) of the extended periodic domain."""
        rows, cols = self.extended_shape(role)
        return (cols * self.cell_width, rows * self.cell_height)


@dataclass(frozen=True)
class CountGrid:
    """Per-cell point counts on a lattice, shape (ny, nx)."""

    counts: np.ndarray
    lattice: Lattice
    n_outside: int = 0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != self.lattice.shape:
            raise ValueError(
                f"counts shape {c.shape} does not match lattice {self.lattice.shape}"
            )
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_lattice(window: tuple[float, float], nx: int, ny: int,
                  margin_level: float = 0.0,
                  margin_class: float = 0.0) -> Lattice:
    """Construct a lattice over ``[0, window[0]] x [0, window[1]]``."""
    w, h = window
    return Lattice(float(w), float(h), int(nx), int(ny),
                   float(margin_level), float(margin_class))


def bin_points(pattern: PointPattern, lattice: Lattice) -> CountGrid:
    """Bin pattern points to per-cell counts.

    Cells are half-open on their right/top edges, except that points lying
    exactly on the window's right or top boundary are assigned to the last
    cell, so the window itself is fully covered. Points outside the window
    are left out of the grid and reported via ``n_outside``.
    """
    x, y = pattern.x, pattern.y
    w, h = lattice.window_width, lattice.window_height
    inside = (x >= 0) & (x <= w) & (y >= 0) & (y <= h)
    ix = np.floor(x[inside] / lattice.cell_width).astype(np.int64)
    iy = np.floor(y[inside] / lattice.cell_height).astype(np.int64)
    # points on the closing boundary fall in the final cell
    ix = np.minimum(ix, lattice.nx - 1)
    iy = np.minimum(iy, lattice.ny - 1)
    counts = np.zeros(lattice.shape, dtype=np.int64)
    np.add.at(counts, (iy, ix), 1)
    return CountGrid(counts, lattice, n_outside=int((~inside).sum()))
