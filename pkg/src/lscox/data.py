"""Data ingestion and covariate preprocessing.

Point patterns arrive as ``x,y`` CSV. Rasters arrive either with a
4-line header (ncols, nrows, cellsize, origin) or as a plain matrix CSV
with the extent supplied by the caller; rows run south to north, so row i
sits at y = y0 + (i + 0.5) * cellsize. Interior NaNs are imputed by
neighbor averaging before any spline fitting, with a warning.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.ndimage import sobel

from .lattice import Lattice, PointPattern


@dataclass(frozen=True)
class Raster:
    """Regular grid of covariate values with a square cell size.

    ``values[i, j]`` sits at (x0 + (j + 0.5) * cellsize,
    y0 + (i + 0.5) * cellsize).
    """

    values: np.ndarray
    cellsize: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("raster values must be a 2-D array")
        if self.cellsize <= 0:
            raise ValueError("cellsize must be positive")
        object.__setattr__(self, "values", v)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the covered area."""
        ny, nx = self.values.shape
        return (self.x0, self.x0 + nx * self.cellsize,
                self.y0, self.y0 + ny * self.cellsize)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.values.shape
        xs = self.x0 + (np.arange(nx) + 0.5) * self.cellsize
        ys = self.y0 + (np.arange(ny) + 0.5) * self.cellsize
        return xs, ys


def load_pattern(path) -> PointPattern:
    """Read an ``x,y`` CSV point file; malformed rows are reported with
    their line number."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        cols = [c.strip().lower() for c in header]
        if cols[:2] != ["x", "y"]:
            raise ValueError(f"{path}: expected header 'x,y', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ValueError(f"{path}: malformed row at line {lineno}: "
                                 f"{row!r}") from None
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError(f"{path}: non-finite coordinate at line "
                                 f"{lineno}")
            rows.append((x, y))
    return PointPattern(np.array(rows, dtype=float).reshape(-1, 2))


def _fill_nans(values: np.ndarray, path) -> np.ndarray:
    """Impute NaN cells by averaging available neighbors, iterating until
    every cell is filled."""
    bad = ~np.isfinite(values)
    if not bad.any():
        return values
    warnings.warn(f"{path}: {int(bad.sum())} missing raster cells imputed "
                  "by neighbor averaging", RuntimeWarning)
    out = values.copy()
    while True:
        bad = ~np.isfinite(out)
        if not bad.any():
            return out
        padded = np.pad(out, 1, constant_values=np.nan)
        stack = np.stack([padded[1:-1, :-2], padded[1:-1, 2:],
                          padded[:-2, 1:-1], padded[2:, 1:-1]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            means = np.nanmean(stack, axis=0)
        ready = bad & np.isfinite(means)
        if not ready.any():
            raise ValueError(f"{path}: raster has no finite values to "
                             "impute from")
        out[ready] = means[ready]


def load_raster(path, cellsize: Optional[float] = None,
                origin: tuple[float, float] = (0.0, 0.0)) -> Raster:
    """Read a raster CSV.

    With a 4-line header (``ncols``, ``nrows``, ``cellsize``, ``origin``)
    the geometry comes from the file; a plain matrix CSV needs
    ``cellsize`` (and optionally ``origin``) from the caller. Matrix rows
    run south to north.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")

    def header_value(line, key):
        parts = line.replace(",", " ").split()
        if len(parts) < 2 or parts[0].lower() != key:
            return None
        return parts[1:]

    first = header_value(lines[0], "ncols")
    if first is not None:
        if len(lines) < 5:
            raise ValueError(f"{path}: header present but no data rows")
        try:
            ncols = int(first[0])
            nrows = int(header_value(lines[1], "nrows")[0])
            cell = float(header_value(lines[2], "cellsize")[0])
            ox, oy = map(float, header_value(lines[3], "origin")[:2])
        except (TypeError, ValueError, IndexError):
            raise ValueError(f"{path}: malformed 4-line raster header; "
                             "expected ncols, nrows, cellsize, origin") from None
        body = lines[4:]
        if len(body) != nrows:
            raise ValueError(f"{path}: header promises {nrows} rows, file "
                             f"has {len(body)}")
        values = _parse_matrix(body, path, ncols)
        return Raster(_fill_nans(values, path), cell, ox, oy)

    if cellsize is None:
        raise ValueError(f"{path}: plain matrix raster needs an explicit "
                         "cellsize")
    values = _parse_matrix(lines, path, None)
    return Raster(_fill_nans(values, path), float(cellsize), *origin)


def _parse_matrix(lines: Sequence[str], path, ncols: Optional[int]) -> np.ndarray:
    rows = []
    for i, ln in enumerate(lines):
        parts = [p for p in ln.replace(",", " ").split() if p]
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"{path}: malformed raster row at line "
                             f"{i + 1} of the data block") from None
        if ncols is not None and len(row) != ncols:
            raise ValueError(f"{path}: row {i + 1} has {len(row)} values, "
                             f"expected {ncols}")
        if rows and len(row) != len(rows[0]):
            raise ValueError(f"{path}: ragged raster row at line {i + 1}")
        rows.append(row)
    return np.array(rows, dtype=float)


def bicubic_to_lattice(raster: Raster, lattice: Lattice) -> np.ndarray:
    """Bicubic spline evaluation of a raster at lattice cell centers.

    Exact at coinciding nodes; raises if the lattice window leaves the
    raster's covered extent.
    """
    xmin, xmax, ymin, ymax = raster.extent
    if (0.0 < xmin or lattice.window_width > xmax or 0.0 < ymin
            or lattice.window_height > ymax):
        raise ValueError("lattice window extends beyond the raster extent")
    xs, ys = raster.cell_centers()
    if len(xs) < 4 or len(ys) < 4:
        raise ValueError("bicubic interpolation needs at least a 4x4 raster")
    spline = RectBivariateSpline(ys, xs, raster.values, kx=3, ky=3)
    return spline(lattice.cell_y, lattice.cell_x)


def sobel_slope(elevation: np.ndarray, spacing: float) -> np.ndarray:
    """Gradient magnitude of an elevation grid from 3x3 Sobel kernels,
    normalized by 1/(8 spacing), replicate edges."""
    elev = np.asarray(elevation, dtype=float)
    if elev.ndim != 2 or min(elev.shape) < 3:
        raise ValueError("elevation grid must be at least 3x3")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    gx = sobel(elev, axis=1, mode="nearest") / (8.0 * spacing)
    gy = sobel(elev, axis=0, mode="nearest") / (8.0 * spacing)
    return np.hypot(gx, gy)


@dataclass(frozen=True)
class StandardScale:
    """Per-covariate centering and scaling, kept for back-mapping."""

    means: np.ndarray
    sds: np.ndarray

    def original_coefficients(self, beta: np.ndarray,
                              intercept: float) -> tuple[np.ndarray, float]:
        """Coefficients on the raw covariate scale equivalent to
        (beta, intercept) on the standardized scale."""
        beta = np.asarray(beta, dtype=float)
        raw = beta / self.sds
        return raw, float(intercept - (beta * self.means / self.sds).sum())

    def standardized_coefficients(self, raw_beta: np.ndarray,
                                  raw_intercept: float) -> tuple[np.ndarray, float]:
        raw_beta = np.asarray(raw_beta, dtype=float)
        beta = raw_beta * self.sds
        return beta, float(raw_intercept + (raw_beta * self.means).sum())


def standardize(stack: np.ndarray,
                names: Optional[Sequence[str]] = None
                ) -> tuple[np.ndarray, StandardScale]:
    """Z-score each covariate layer of a (q, ny, nx) stack over cells."""
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3:
        raise ValueError("covariate stack must have shape (q, ny, nx)")
    q = stack.shape[0]
    flat = stack.reshape(q, -1)
    means = flat.mean(axis=1)
    sds = flat.std(axis=1, ddof=0)
    for i in range(q):
        if sds[i] == 0:
            label = names[i] if names else f"covariate {i}"
            raise ValueError(f"{label} has zero variance and cannot be "
                             "standardized")
    out = (flat - means[:, None]) / sds[:, None]
    return out.reshape(stack.shape), StandardScale(means, sds)


def vif_prune(stack: np.ndarray, threshold: float = 5.0,
              names: Optional[Sequence[str]] = None):
    """Iteratively drop the covariate with the largest variance inflation
    factor until all fall at or below the threshold.

    Each factor is 1/(1 - R^2) from regressing one covariate on the
    others plus an intercept. Ties break toward the larger index, so a
    perfectly duplicated pair loses its later copy. Returns the retained
    index list and a removal trace of (name, factor) pairs.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3:
        raise ValueError("covariate stack must have shape (q, ny, nx)")
    q = stack.shape[0]
    if q < 2:
        raise ValueError("need at least 2 covariates")
    flat = stack.reshape(q, -1).T
    n = flat.shape[0]
    if n <= q:
        raise ValueError("need more cells than covariates")
    if names is None:
        names = [f"covariate {i}" for i in range(q)]

    def vif_one(cols, i):
        others = [c for c in cols if c != i]
        design = np.column_stack([np.ones(n)] + [flat[:, c] for c in others])
        y = flat[:, i]
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        tss = ((y - y.mean()) ** 2).sum()
        if tss == 0:
            return np.inf
        r2 = 1.0 - (resid ** 2).sum() / tss
        if r2 >= 1.0:
            return np.inf
        return 1.0 / (1.0 - r2)

    retained = list(range(q))
    trace = []
    while len(retained) >= 2:
        vifs = np.array([vif_one(retained, i) for i in retained])
        worst = vifs.max()
        if worst <= threshold:
            break
        # argmax of reversed order implements the larger-index tie-break
        pos = len(vifs) - 1 - int(np.argmax(vifs[::-1]))
        removed = retained.pop(pos)
        trace.append((names[removed], float(worst)))
    return retained, trace


def holm_bonferroni(samples: np.ndarray, alpha: float = 0.05,
                    names: Optional[Sequence[str]] = None):
    """Step-down multiple-testing decision from posterior samples.

    ``samples`` has shape (n_draws, m). The two-sided empirical tail
    probability per coefficient, floored at 1/(n+1), feeds the step-down
    rule: sort ascending and reject while p_(j) <= alpha / (m - j + 1).
    Returns (flags, p_values).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n, m = samples.shape
    if n < 100:
        raise ValueError("need at least 100 posterior draws")
    floor = 1.0 / (n + 1)
    p_pos = (samples > 0).mean(axis=0)
    p_neg = (samples < 0).mean(axis=0)
    pvals = np.maximum(2.0 * np.minimum(p_pos, p_neg), floor)
    pvals = np.minimum(pvals, 1.0)

    order = np.argsort(pvals, kind="stable")
    flags = np.zeros(m, dtype=bool)
    for j, idx in enumerate(order, start=1):
        if pvals[idx] <= alpha / (m - j + 1):
            flags[idx] = True
        else:
            break
    return flags, pvals
