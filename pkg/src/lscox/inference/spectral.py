"""Shared spectral machinery for one field role on one lattice.

Holds the frequency grid, truncation mask, and the FFT plumbing used by
both the field updates (whitened coordinates) and the hyperparameter
updates (spectral Gaussian density of a fixed field). The field operator
``apply`` is symmetric, so it serves as its own adjoint when mapping
likelihood gradients back to white-noise coordinates.
"""

from __future__ import annotations

import numpy as np

from ..lattice import Lattice


class SpectralOps:
    """Frequency bookkeeping for (lattice, role, truncation order)."""

    def __init__(self, lattice: Lattice, role: str, order: int | None = None):
        from ..grf import frequency_grid, truncation_mask

        self.lattice = lattice
        self.role = role
        self.order = order
        self.shape = lattice.extended_shape(role)
        self.n = self.shape[0] * self.shape[1]
        fy, fx = frequency_grid(lattice, role)
        self.omega2 = 4.0 * np.pi**2 * (fx**2 + fy**2)
        self.mask = truncation_mask(lattice, role, order)
        self.m_active = int(self.mask.sum())

    def weights(self, sigma: float, rho: float, nu: float) -> np.ndarray:
        """Per-coefficient variances S, renormalized to sum to sigma^2."""
        kappa2 = 8.0 * nu / rho**2
        w = np.where(self.mask, (kappa2 + self.omega2) ** (-(nu + 1.0)), 0.0)
        return sigma**2 * w / w.sum()

    def dlog_weights_dlog_rho(self, rho: float, nu: float) -> np.ndarray:
        """d log S_j / d log rho over the active coefficients (1-D)."""
        kappa2 = 8.0 * nu / rho**2
        # d log w / d log kappa before renormalization; d log kappa / d log rho = -1
        dk = 2.0 * nu - 2.0 * (nu + 1.0) * kappa2 / (kappa2 + self.omega2)
        w = np.where(self.mask, (kappa2 + self.omega2) ** (-(nu + 1.0)), 0.0)
        centered = dk - (w * dk).sum() / w.sum()
        return -centered[self.mask]

    def transfer(self, weights: np.ndarray) -> np.ndarray:
        return np.sqrt(weights * self.n)

    def apply(self, transfer: np.ndarray, arr: np.ndarray) -> np.ndarray:
        """Symmetric spectral multiplier acting on a real extended-grid array."""
        return np.fft.ifft2(transfer * np.fft.fft2(arr)).real

    def pad_window(self, window_arr: np.ndarray) -> np.ndarray:
        """Zero-pad a (ny, nx) window array to the extended grid."""
        out = np.zeros(self.shape)
        out[: self.lattice.ny, : self.lattice.nx] = window_arr
        return out

    def window(self, ext_arr: np.ndarray) -> np.ndarray:
        return ext_arr[: self.lattice.ny, : self.lattice.nx]

    def xhat(self, transfer: np.ndarray, white: np.ndarray) -> np.ndarray:
        """Spectral amplitudes of the field generated by ``white``."""
        return transfer * np.fft.fft2(white)

    def quad(self, xhat: np.ndarray) -> np.ndarray:
        """|X_hat|^2 / n^2 per coefficient (the Gaussian quadratic form terms)."""
        return (xhat.real**2 + xhat.imag**2) / float(self.n) ** 2

    def rewhiten(self, xhat: np.ndarray, transfer: np.ndarray) -> np.ndarray:
        """White noise reproducing the fixed field ``xhat`` under a new transfer."""
        safe = np.where(self.mask, transfer, 1.0)
        zhat = np.where(self.mask, xhat / safe, 0.0)
        return np.fft.ifft2(zhat).real
