"""Stationary Matern Gaussian random fields on lattice grids.

Covariance and spectral density evaluation, an O(N log N) sampler built on
the FFT over the lattice's extended periodic grid, a dense Cholesky oracle
for validating it, and spectral truncation (projection to low orders).

Frequencies are in cycles per unit length throughout. The discrete sampling
spectrum is renormalized over its active truncation mask so the marginal
variance of a sampled field is exactly sigma^2; the closed-form density
integrates to sigma^2 over the whole plane but a finite grid loses tail
mass, and the renormalization absorbs that loss.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn, kv

from .lattice import CLASS_ROLE, Lattice

logger = logging.getLogger(__name__)

#: Dense-oracle size limit; beyond this a Cholesky factor is impractical.
MAX_CHOLESKY_CELLS = 4096

#: Diagonal jitter for the oracle factorization, relative to sigma^2.
CHOLESKY_JITTER = 1e-10


@dataclass(frozen=True)
class MaternSpec:
    """Matern covariance hyperparameters.

    Parameters
    ----------
    sigma : float
        Marginal standard deviation.
    rho : float
        Correlation range; the distance where correlation drops to about 0.1.
    nu : float
        Smoothness. The application fixes nu = 1.
    """

    sigma: float
    rho: float
    nu: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")
        if not (self.rho > 0):
            raise ValueError("rho must be positive")
        if not (self.nu > 0):
            raise ValueError("nu must be positive")

    @property
    def kappa(self) -> float:
        return math.sqrt(8.0 * self.nu) / self.rho


def matern_cov(h, spec: MaternSpec):
    """Matern covariance at distance ``h`` (scalar or array), limit sigma^2 at 0."""
    h = np.asarray(h, dtype=float)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    if np.any(h < 0):
        raise ValueError("distances must be nonnegative")
    kh = spec.kappa * h
    out = np.full(h.shape, spec.sigma**2)
    pos = kh > 0
    const = spec.sigma**2 * 2.0 ** (1.0 - spec.nu) / gamma_fn(spec.nu)
    out[pos] = const * kh[pos] ** spec.nu * kv(spec.nu, kh[pos])
    return float(out[0]) if scalar else out


def matern_spectral_density(freq, spec: MaternSpec):
    """Spectral density at planar frequency ``freq`` (cycles per length).

    ``freq`` is a 2-vector or an array whose last axis has length 2. The
    d = 2 closed form integrates to sigma^2 over the plane:
    ``4 pi sigma^2 nu kappa^{2 nu} (kappa^2 + 4 pi^2 |xi|^2)^{-(nu+1)}``.
    """
    f = np.asarray(freq, dtype=float)
    if f.shape[-1] != 2:
        raise ValueError("frequency must have a trailing axis of length 2")
    w2 = 4.0 * np.pi**2 * np.sum(f**2, axis=-1)
    k2 = spec.kappa**2
    dens = (4.0 * np.pi * spec.sigma**2 * spec.nu * k2**spec.nu
            * (k2 + w2) ** (-(spec.nu + 1.0)))
    return dens


def frequency_grid(lattice: Lattice, role: str) -> tuple[np.ndarray, np.ndarray]:
    """FFT frequency grids (fy, fx) in cycles/length for the extended domain.

    Shapes broadcast to the extended grid: fy is (rows, 1), fx is (1, cols).
    """
    rows, cols = lattice.extended_shape(role)
    fx = np.fft.fftfreq(cols, d=lattice.cell_width)[None, :]
    fy = np.fft.fftfreq(rows, d=lattice.cell_height)[:, None]
    return fy, fx


def truncation_mask(lattice: Lattice, role: str, order: int | None) -> np.ndarray:
    """Boolean mask of active coefficients for per-axis order ``order``.

    ``None`` keeps every coefficient. Order p retains integer frequency
    indices with absolute value <= p on both axes.
    """
    rows, cols = lattice.extended_shape(role)
    if order is None:
        return np.ones((rows, cols), dtype=bool)
    if order < 0:
        raise ValueError("truncation order must be nonnegative")
    kx = np.abs(np.fft.fftfreq(cols) * cols)[None, :]
    ky = np.abs(np.fft.fftfreq(rows) * rows)[:, None]
    return (kx <= order) & (ky <= order)


def full_order(lattice: Lattice, role: str) -> int:
    """Largest per-axis index the extended grid resolves."""
    rows, cols = lattice.extended_shape(role)
    return max(rows, cols) // 2


def spectrum_weights(spec: MaternSpec, lattice: Lattice, role: str,
                     order: int | None = None) -> np.ndarray:
    """Per-coefficient variance weights S on the extended grid.

    Zero outside the truncation mask; the active weights sum to sigma^2
    exactly (numeric normalization). The result is cached and read-only;
    copy before mutating.
    """
    return _spectrum_weights_cached(spec, lattice, role, order)


@lru_cache(maxsize=128)
def _spectrum_weights_cached(spec: MaternSpec, lattice: Lattice, role: str,
                             order: int | None) -> np.ndarray:
    fy, fx = frequency_grid(lattice, role)
    w2 = 4.0 * np.pi**2 * (fx**2 + fy**2)
    k2 = spec.kappa**2
    w = (k2 + w2) ** (-(spec.nu + 1.0))
    mask = truncation_mask(lattice, role, order)
    w = np.where(mask, w, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("empty truncation mask")
    w = spec.sigma**2 * w / total
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class SpectralField:
    """A Gaussian field realization in spectral and real space.

    ``white`` is the generating white-noise array, ``coeff`` the complex
    spectral amplitudes (Hermitian-symmetric), and ``values_ext`` the real
    field on the extended periodic grid. ``values`` restricts to the window.
    """

    spec: MaternSpec
    lattice: Lattice
    role: str
    order: int | None
    white: np.ndarray
    coeff: np.ndarray
    values_ext: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.values_ext[: self.lattice.ny, : self.lattice.nx]


def sample_fft(spec: MaternSpec, lattice: Lattice, rng: np.random.Generator,
               role: str = CLASS_ROLE, order: int | None = None) -> SpectralField:
    """Draw a zero-mean Matern field on the lattice via the FFT.

    The covariance between window cell centers matches ``matern_cov`` up to
    truncation and wrap-around error (controlled by the lattice margin for
    ``role``). Deterministic given the generator state.
    """
    if spec.rho < 2.0 * min(lattice.cell_width, lattice.cell_height):
        logger.warning(
            "range %.4g below twice the cell size; the lattice cannot resolve it",
            spec.rho,
        )
    rows, cols = lattice.extended_shape(role)
    weights = spectrum_weights(spec, lattice, role, order)
    transfer = np.sqrt(weights * rows * cols)
    white = rng.standard_normal((rows, cols))
    coeff = transfer * np.fft.fft2(white)
    values = np.fft.ifft2(coeff).real
    return SpectralField(spec, lattice, role, order, white, coeff, values)


def project(fld: SpectralField, order: int) -> SpectralField:
    """Zero all coefficients above per-axis ``order``; idempotent.

    No renormalization is applied, so the projected field's variance can
    only decrease.
    """
    if fld.order is not None and order > fld.order:
        raise ValueError("cannot project to a higher order than the field carries")
    mask = truncation_mask(fld.lattice, fld.role, order)
    coeff = np.where(mask, fld.coeff, 0.0)
    values = np.fft.ifft2(coeff).real
    return replace(fld, order=order, coeff=coeff, values_ext=values)


def sample_cholesky(spec: MaternSpec, lattice: Lattice,
                    rng: np.random.Generator,
                    size: int | None = None) -> np.ndarray:
    """Exact N(0, Sigma) draws at window cell centers via dense Cholesky.

    Validation oracle for :func:`sample_fft`; quadratic storage, so the
    window is capped at ``MAX_CHOLESKY_CELLS`` cells. Returns a (ny, nx)
    array, or (size, ny, nx) when ``size`` is given; the factorization is
    shared across draws.
    """
    n = lattice.n_cells
    if n > MAX_CHOLESKY_CELLS:
        raise ValueError(f"lattice has {n} cells; dense oracle cap is {MAX_CHOLESKY_CELLS}")
    xg, yg = lattice.center_grid()
    pts = np.column_stack([xg.ravel(), yg.ravel()])
    dist = np.hypot(pts[:, None, 0] - pts[None, :, 0],
                    pts[:, None, 1] - pts[None, :, 1])
    cov = matern_cov(dist, spec)
    cov[np.diag_indices_from(cov)] += CHOLESKY_JITTER * spec.sigma**2
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "covariance matrix not positive definite after jitter"
        ) from exc
    if size is None:
        draw = factor @ rng.standard_normal(n)
        return draw.reshape(lattice.shape)
    draws = rng.standard_normal((size, n)) @ factor.T
    return draws.reshape((size,) + lattice.shape)
